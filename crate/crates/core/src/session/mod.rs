//! Live pipeline: operator input → exoskeleton FK → workspace mapping →
//! robot IK → hand retargeting or gripper aperture.

mod config;
mod game;
pub mod protocol;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose6D, Quat};
use crate::kinematics::{
    forward_kinematics, IkOptions, JointVector, KinematicChain, KinematicsError, WarmStartIk,
};
use crate::mapping::{
    map_orientation, map_position, MappingError, MappingParams, RotationRanges,
    WorkspaceCalibration,
};
use crate::retargeting::{
    aperture_from_distance, gripper_aperture, GripperCalibration, HandModel, HandRetargeter,
    RetargetConfig, RetargetError,
};
use crate::simulator::SimulatorError;

pub use config::{ArmSection, CalibrationSource, HandMode, HandSection, SessionConfig, WorkspaceSection};
pub use game::GameSession;
pub use protocol::{ArmInput, InputFrame, Message};

const EXOSKELETON: &str = include_str!("../../../../configs/chains/exoskeleton.toml");

/// The shipped 6-DoF exoskeleton arm.
pub fn builtin_exoskeleton() -> KinematicChain {
    KinematicChain::from_toml_str(EXOSKELETON).expect("shipped chain parses")
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("bad frame: {0}")]
    BadFrame(String),
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Retarget(#[from] RetargetError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub enum HandSetup {
    None,
    Gripper(GripperCalibration),
    /// `cfg.alpha` is replaced by the model's hand-size ratio on the first
    /// hand frame when `auto_alpha` is set.
    Hand {
        model: HandModel,
        cfg: RetargetConfig,
        auto_alpha: bool,
    },
}

#[derive(Debug, Clone)]
pub struct ArmSetup {
    pub name: String,
    pub calibration: WorkspaceCalibration,
    pub mapping: MappingParams,
    /// Rotation mapping spans; `None` keeps the robot at `home`.
    pub rotation: Option<RotationRanges>,
    pub home: Quat,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub exoskeleton: KinematicChain,
    pub robot: Option<KinematicChain>,
    pub hand: HandSetup,
    pub arms: Vec<ArmSetup>,
    pub ik: IkOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmCommand {
    pub ee: Pose6D,
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<JointVector>,
    /// False when IK did not converge and `joints` repeats the last command.
    pub ik_converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<JointVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gripper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandFrame {
    pub timestamp: f64,
    pub arms: Vec<Option<ArmCommand>>,
}

struct ArmRuntime {
    ik: Option<WarmStartIk>,
    last_joints: Option<JointVector>,
    hand: Option<HandRetargeter>,
    alpha_pending: bool,
    last_hand: Option<JointVector>,
    last_gripper: Option<f64>,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    arms: Vec<ArmRuntime>,
    last_timestamp: Option<f64>,
    received: u64,
    dropped: u64,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, SessionError> {
        if cfg.arms.is_empty() {
            return Err(SessionError::Config("at least one arm is required".into()));
        }
        cfg.exoskeleton.require_exoskeleton()?;
        let arms = cfg
            .arms
            .iter()
            .map(|_| {
                let hand = match &cfg.hand {
                    HandSetup::Hand { model, cfg: rc, .. } => {
                        Some(HandRetargeter::new(model.clone(), rc.clone())?)
                    }
                    _ => None,
                };
                Ok(ArmRuntime {
                    ik: cfg.robot.clone().map(|c| WarmStartIk::new(c, cfg.ik)),
                    last_joints: None,
                    hand,
                    alpha_pending: matches!(cfg.hand, HandSetup::Hand { auto_alpha: true, .. }),
                    last_hand: None,
                    last_gripper: None,
                })
            })
            .collect::<Result<Vec<_>, SessionError>>()?;
        Ok(Self {
            cfg,
            arms,
            last_timestamp: None,
            received: 0,
            dropped: 0,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn received(&self) -> u64 {
        self.received
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Wrist pose of one arm's input.
    pub fn wrist_pose(exo: &KinematicChain, input: &ArmInput) -> Result<Pose6D, SessionError> {
        match (&input.joints, &input.wrist) {
            (Some(q), None) => {
                if q.iter().any(|v| !v.is_finite()) {
                    return Err(SessionError::BadFrame("non-finite joint angle".into()));
                }
                forward_kinematics(exo, q).map_err(|e| SessionError::BadFrame(e.to_string()))
            }
            (None, Some(p)) if p.is_finite() => Ok(*p),
            (None, Some(_)) => Err(SessionError::BadFrame("non-finite wrist pose".into())),
            _ => Err(SessionError::BadFrame(
                "each arm needs exactly one of joints or wrist".into(),
            )),
        }
    }

    fn check(&self, input: &InputFrame) -> Result<(), SessionError> {
        if !input.timestamp.is_finite() {
            return Err(SessionError::BadFrame("non-finite timestamp".into()));
        }
        if let Some(t) = self.last_timestamp {
            if input.timestamp <= t {
                return Err(SessionError::BadFrame(format!(
                    "timestamp {} does not increase past {t}",
                    input.timestamp
                )));
            }
        }
        if input.arms.len() != self.arms.len() {
            return Err(SessionError::BadFrame(format!(
                "{} arm entries for {} arms",
                input.arms.len(),
                self.arms.len()
            )));
        }
        if input.arms.iter().all(Option::is_none) {
            return Err(SessionError::BadFrame("no arm present".into()));
        }
        if input
            .arms
            .iter()
            .flatten()
            .any(|a| a.gripper_distance.is_some_and(|d| !d.is_finite()))
        {
            return Err(SessionError::BadFrame("non-finite gripper distance".into()));
        }
        Ok(())
    }

    /// Processes one frame. A rejected frame is counted as dropped.
    pub fn tick(&mut self, input: &InputFrame) -> Result<CommandFrame, SessionError> {
        self.received += 1;
        let result = self.check(input).and_then(|_| {
            // Resolve every arm's wrist first so a bad arm drops the whole frame.
            let wrists = input
                .arms
                .iter()
                .map(|a| a.as_ref().map(|a| Self::wrist_pose(&self.cfg.exoskeleton, a)).transpose())
                .collect::<Result<Vec<_>, _>>()?;
            let mut out = Vec::with_capacity(wrists.len());
            for (i, (wrist, arm_in)) in wrists.iter().zip(&input.arms).enumerate() {
                out.push(match (wrist, arm_in) {
                    (Some(w), Some(a)) => Some(self.arm_tick(i, w, a)?),
                    _ => None,
                });
            }
            Ok(out)
        });
        match result {
            Ok(arms) => {
                self.last_timestamp = Some(input.timestamp);
                Ok(CommandFrame {
                    timestamp: input.timestamp,
                    arms,
                })
            }
            Err(e) => {
                self.dropped += 1;
                Err(e)
            }
        }
    }

    fn arm_tick(&mut self, i: usize, wrist: &Pose6D, input: &ArmInput) -> Result<ArmCommand, SessionError> {
        let setup = &self.cfg.arms[i];
        let rt = &mut self.arms[i];
        let mapped = map_position(wrist, &setup.mapping);
        let orientation = match &setup.rotation {
            Some(ranges) => map_orientation(&wrist.orientation, &setup.calibration, ranges, &setup.home)?,
            None => setup.home,
        };
        let ee = Pose6D::new(mapped.position, orientation);

        let (joints, ik_converged) = match rt.ik.as_mut() {
            Some(ik) => {
                let sol = ik.solve(&ee);
                if sol.converged {
                    rt.last_joints = Some(sol.q.clone());
                    (Some(sol.q), true)
                } else {
                    let held = rt.last_joints.clone().unwrap_or_else(|| ik.seed().clone());
                    (Some(held), false)
                }
            }
            None => (None, true),
        };

        let mut hand = None;
        let mut gripper = None;
        match &self.cfg.hand {
            HandSetup::None => {}
            HandSetup::Gripper(calib) => {
                let a = match (input.gripper_distance, &input.hand) {
                    (Some(d), _) => Some(aperture_from_distance(d, calib)),
                    (None, Some(h)) => Some(gripper_aperture(h, calib)),
                    (None, None) => None,
                };
                if a.is_some() {
                    rt.last_gripper = a;
                }
                gripper = rt.last_gripper;
            }
            HandSetup::Hand { model, cfg, .. } => {
                if let (Some(frame), Some(r)) = (&input.hand, rt.hand.as_mut()) {
                    if rt.alpha_pending {
                        let mut c = cfg.clone();
                        c.alpha = model.default_alpha(frame);
                        *r = HandRetargeter::new(model.clone(), c)?;
                        rt.alpha_pending = false;
                    }
                    rt.last_hand = Some(r.step(frame)?);
                }
                hand = rt.last_hand.clone();
            }
        }

        Ok(ArmCommand {
            ee,
            clamped: mapped.clamped,
            joints,
            ik_converged,
            hand,
            gripper,
        })
    }
}
