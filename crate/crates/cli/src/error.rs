use std::fmt;
use std::process::ExitCode;

use teleop_core::kinematics::KinematicsError;
use teleop_core::mapping::MappingError;
use teleop_core::retargeting::RetargetError;
use teleop_core::session::SessionError;
use teleop_core::simulator::SimulatorError;

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// `verify` found a mismatch.
    Mismatch = 1,
    Config = 3,
    Io = 4,
    /// Input violated a data contract (bad recording, bad hand frame, ...).
    Contract = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind as u8)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(Kind::Io, e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::new(Kind::Io, e.to_string())
    }
}

impl From<SimulatorError> for Failure {
    fn from(e: SimulatorError) -> Self {
        let kind = match &e {
            SimulatorError::InvalidConfig(_)
            | SimulatorError::Parse(_)
            | SimulatorError::UnknownVariant(_)
            | SimulatorError::Mapping(_) => Kind::Config,
            SimulatorError::Io { .. } => Kind::Io,
            SimulatorError::OperatorArity { .. } | SimulatorError::Recording(_) => Kind::Contract,
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<KinematicsError> for Failure {
    fn from(e: KinematicsError) -> Self {
        let kind = match &e {
            KinematicsError::Io { .. } => Kind::Io,
            KinematicsError::LengthMismatch { .. } => Kind::Contract,
            _ => Kind::Config,
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<MappingError> for Failure {
    fn from(e: MappingError) -> Self {
        let kind = match &e {
            MappingError::Io { .. } => Kind::Io,
            MappingError::EmptyStream | MappingError::CalibrationTooSmall { .. } => Kind::Contract,
            _ => Kind::Config,
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<RetargetError> for Failure {
    fn from(e: RetargetError) -> Self {
        let kind = match &e {
            RetargetError::Io { .. } => Kind::Io,
            RetargetError::Parse(_)
            | RetargetError::InvalidModel(_)
            | RetargetError::InvalidConfig(_)
            | RetargetError::Kinematics(_) => Kind::Config,
            _ => Kind::Contract,
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Kinematics(e) => e.into(),
            SessionError::Mapping(e) => e.into(),
            SessionError::Retarget(e) => e.into(),
            SessionError::Simulator(e) => e.into(),
            SessionError::Io { .. } => Failure::new(Kind::Io, e.to_string()),
            SessionError::Config(_) => Failure::new(Kind::Config, e.to_string()),
            SessionError::BadFrame(_) => Failure::new(Kind::Contract, e.to_string()),
        }
    }
}
