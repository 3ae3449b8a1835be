use std::io::Write;

use crate::geometry::Pose6D;
use crate::kinematics::KinematicChain;
use crate::simulator::recording::FrameRecord;
use crate::simulator::{GameConfig, Recording, Simulation};

use super::protocol::{InputFrame, MappingSummary, Message, SessionConfigMsg, StateSnapshot, PROTOCOL_VERSION};
use super::{Pipeline, SessionError};

/// A target-reaching session driven by wire-protocol input frames.
///
/// Frames are validated, converted to wrist poses (joint frames through
/// the exoskeleton FK, absent arms holding) and handed to the simulation,
/// which zero-order holds between frames.
pub struct GameSession {
    sim: Simulation,
    exo: KinematicChain,
    last_timestamp: Option<f64>,
}

impl GameSession {
    pub fn new(config: GameConfig, exo: KinematicChain, operator: impl Into<String>) -> Self {
        Self {
            sim: Simulation::new(config, operator),
            exo,
            last_timestamp: None,
        }
    }

    pub fn with_writer(mut self, w: Box<dyn Write + Send>) -> std::io::Result<Self> {
        self.sim = self.sim.with_writer(w)?;
        Ok(self)
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn config_message(&self, session_id: &str) -> Message {
        Message::SessionConfig(SessionConfigMsg {
            protocol_version: PROTOCOL_VERSION,
            session_id: session_id.into(),
            game: self.sim.config().clone(),
            mappings: self.sim.mappings().iter().map(MappingSummary::from).collect(),
        })
    }

    fn poses(&self, frame: &InputFrame) -> Result<Vec<Pose6D>, SessionError> {
        if !frame.timestamp.is_finite() || self.last_timestamp.is_some_and(|t| frame.timestamp <= t) {
            return Err(SessionError::BadFrame("timestamps must strictly increase".into()));
        }
        let current = self.sim.human();
        if frame.arms.len() != current.len() {
            return Err(SessionError::BadFrame(format!(
                "{} arm entries for {} arms",
                frame.arms.len(),
                current.len()
            )));
        }
        if frame.arms.iter().all(Option::is_none) {
            return Err(SessionError::BadFrame("no arm present".into()));
        }
        frame
            .arms
            .iter()
            .zip(current)
            .map(|(a, held)| match a {
                Some(a) => Pipeline::wrist_pose(&self.exo, a),
                None => Ok(*held),
            })
            .collect()
    }

    /// Accepts a frame for the next tick; rejected frames count as dropped.
    pub fn accept(&mut self, frame: &InputFrame) -> Result<(), SessionError> {
        match self.poses(frame) {
            Ok(p) => {
                self.sim.submit(p)?;
                self.last_timestamp = Some(frame.timestamp);
                Ok(())
            }
            Err(e) => {
                self.sim.note_dropped();
                Err(e)
            }
        }
    }

    pub fn step(&mut self) -> FrameRecord {
        self.sim.step()
    }

    pub fn done(&self) -> bool {
        self.sim.done()
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot::of(&self.sim)
    }

    pub fn finish(self, truncated: bool) -> Recording {
        self.sim.finish(truncated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::session::ArmInput;
    use crate::simulator::verify;

    fn session() -> GameSession {
        let mut cfg = GameConfig::builtin("large_large").unwrap();
        cfg.session_duration = 1.0;
        let exo = KinematicChain::from_toml_str(include_str!("../../../../configs/chains/exoskeleton.toml")).unwrap();
        GameSession::new(cfg, exo, "ui")
    }

    #[test]
    fn frames_are_held_between_inputs() {
        let mut s = session();
        let p = Pose6D::from_position(Vec3::new(0.35, 0.2, 1.1));
        s.accept(&InputFrame { timestamp: 0.0, arms: vec![Some(ArmInput::wrist(p)), None] }).unwrap();
        for _ in 0..3 {
            let f = s.step();
            assert_eq!(f.human[0], p);
        }
        assert!(s.accept(&InputFrame { timestamp: 0.0, arms: vec![Some(ArmInput::wrist(p)), None] }).is_err());
        assert!(s.accept(&InputFrame { timestamp: 0.1, arms: vec![None, None] }).is_err());
        s.accept(&InputFrame { timestamp: 0.2, arms: vec![None, Some(ArmInput::joints(vec![0.0; 6]))] }).unwrap();
        let f = s.step();
        assert_eq!(f.human[0], p);
        assert!((f.human[1].position - Vec3::new(0.59, 0.0, 0.0)).norm() < 1e-12);
        while !s.done() {
            s.step();
        }
        let rec = s.finish(false);
        assert_eq!(rec.trailer.received, 4);
        assert_eq!(rec.trailer.recorded, 2);
        assert_eq!(rec.trailer.dropped, 2);
        assert!(verify(&rec).ok());
    }

    #[test]
    fn snapshot_reflects_state() {
        let mut s = session();
        s.step();
        let snap = s.snapshot();
        assert_eq!(snap.tick, 1);
        assert_eq!(snap.arms.len(), 2);
        assert_eq!(snap.arms[0].target_radius, 0.12);
        assert!(snap.keep_fraction >= 0.0 && snap.keep_fraction <= 1.0);
        let msg = s.config_message("abc");
        assert!(matches!(msg, Message::SessionConfig(ref c) if c.mappings.len() == 2 && c.session_id == "abc"));
    }
}
