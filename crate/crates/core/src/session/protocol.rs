//! Wire messages. Each message is one JSON object tagged by `type`; the
//! transport carries one message per text frame. Unknown fields are
//! rejected.

use serde::{Deserialize, Serialize};

use crate::geometry::Pose6D;
use crate::kinematics::JointVector;
use crate::mapping::{MappingMode, MappingParams};
use crate::retargeting::HandFrame;
use crate::simulator::{GameConfig, SessionMetrics, Simulation};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    Ui,
    Exo,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientHello {
    pub protocol_version: u32,
    pub client_kind: ClientKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSummary {
    pub gamma: f64,
    pub human_center: [f64; 3],
    pub target_center: [f64; 3],
    pub workspace_center: [f64; 3],
    pub workspace_radius: f64,
    pub mode: MappingMode,
}

impl From<&MappingParams> for MappingSummary {
    fn from(m: &MappingParams) -> Self {
        Self {
            gamma: m.gamma,
            human_center: m.human_center.into(),
            target_center: m.target_center.into(),
            workspace_center: m.robot_workspace.center().into(),
            workspace_radius: m.robot_workspace.radius(),
            mode: m.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfigMsg {
    pub protocol_version: u32,
    pub session_id: String,
    pub game: GameConfig,
    pub mappings: Vec<MappingSummary>,
}

/// Operator input for one arm: exactly one of `joints` (exoskeleton joint
/// angles) or `wrist` (a wrist pose), plus optional hand data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<JointVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrist: Option<Pose6D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand: Option<HandFrame>,
    /// Thumb-index distance in meters, used instead of a full hand frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gripper_distance: Option<f64>,
}

impl ArmInput {
    pub fn joints(q: Vec<f64>) -> Self {
        Self {
            joints: Some(JointVector(q)),
            wrist: None,
            hand: None,
            gripper_distance: None,
        }
    }

    pub fn wrist(pose: Pose6D) -> Self {
        Self {
            joints: None,
            wrist: Some(pose),
            hand: None,
            gripper_distance: None,
        }
    }

    pub fn with_hand(mut self, hand: HandFrame) -> Self {
        self.hand = Some(hand);
        self
    }
}

/// One operator sample; `arms[i] = None` leaves arm `i` holding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFrame {
    pub timestamp: f64,
    pub arms: Vec<Option<ArmInput>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSnapshot {
    pub ee_center: [f64; 3],
    pub ee_radius: f64,
    pub target_center: [f64; 3],
    pub target_radius: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSnapshot {
    pub tick: u64,
    pub clock: f64,
    pub arms: Vec<ArmSnapshot>,
    /// Keep timer as a fraction of the keep time, in [0, 1].
    pub keep_fraction: f64,
    pub completed: usize,
    pub timed_out: usize,
}

impl StateSnapshot {
    pub fn of(sim: &Simulation) -> Self {
        let st = sim.state();
        let cfg = sim.config();
        let keep_fraction = if cfg.keep_time > 0.0 {
            (st.keep_timer / cfg.keep_time).min(1.0)
        } else {
            0.0
        };
        Self {
            tick: sim.tick_index(),
            clock: st.clock,
            arms: st
                .arms
                .iter()
                .map(|a| ArmSnapshot {
                    ee_center: a.ee.into(),
                    ee_radius: cfg.ee_radius,
                    target_center: a.target.center().into(),
                    target_radius: a.target.radius(),
                    inside: a.inside,
                })
                .collect(),
            keep_fraction,
            completed: st.completed,
            timed_out: st.records.len() - st.completed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionEnd {
    pub metrics: SessionMetrics,
    pub recording_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorMsg {
    pub code: String,
    pub detail: String,
}

pub mod codes {
    pub const BAD_FRAME: &str = "bad-frame";
    pub const VERSION: &str = "unsupported-version";
    pub const HANDSHAKE: &str = "handshake";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    ClientHello(ClientHello),
    SessionConfig(SessionConfigMsg),
    InputFrame(InputFrame),
    StateSnapshot(StateSnapshot),
    SessionEnd(SessionEnd),
    Error(ErrorMsg),
}

impl Message {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        Message::Error(ErrorMsg {
            code: code.into(),
            detail: detail.into(),
        })
    }
}
