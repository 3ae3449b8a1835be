//! Scripted stand-ins for a human operator.

use std::collections::BTreeMap;

use crate::geometry::{Pose6D, Sphere, Vec3};
use crate::mapping::MappingParams;

use super::config::{GameConfig, SimulatorError};
use super::recording::{RecordLine, Recording};
use super::rng::TargetRng;

/// What an operator sees at the start of a tick.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub tick: u64,
    pub clock: f64,
    pub dt: f64,
    pub target_id: u64,
    pub targets: Vec<Sphere>,
    pub ee: Vec<Vec3>,
    pub human: &'a [Pose6D],
    pub mappings: &'a [MappingParams],
    pub config: &'a GameConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorPoll {
    /// Zero or more per-arm wrist pose sets; the last one is applied and an
    /// empty list holds the previous pose.
    Inputs(Vec<Vec<Pose6D>>),
    Exhausted,
}

pub trait OperatorSource {
    fn name(&self) -> String;
    fn poll(&mut self, obs: &Observation<'_>) -> OperatorPoll;
}

/// Fraction of the containment tolerance the optimal operator stops short
/// of the boundary, so holds are not decided by rounding.
const AIM_MARGIN: f64 = 0.1;

/// Moves each wrist at capped speed straight toward the human-frame
/// pre-image of a point just inside the target, then holds.
#[derive(Debug, Clone)]
pub struct OptimalOperator {
    speed: f64,
    commanded: Option<Vec<Vec3>>,
    aim: Option<(u64, Vec<Vec3>)>,
}

impl OptimalOperator {
    pub fn new(speed: f64) -> Self {
        Self {
            speed,
            commanded: None,
            aim: None,
        }
    }

    /// Robot-frame waypoint for a target, starting from `start`.
    pub fn aim_point(start: &Vec3, target: &Sphere, ee_radius: f64) -> Vec3 {
        let tol = target.radius() - ee_radius;
        let stop = tol * (1.0 - AIM_MARGIN);
        let offset = start - target.center();
        let d = offset.norm();
        if d <= stop {
            *start
        } else {
            target.center() + offset * (stop / d)
        }
    }

    fn next_positions(&mut self, obs: &Observation<'_>) -> Vec<Vec3> {
        let cmd = self
            .commanded
            .get_or_insert_with(|| obs.human.iter().map(|p| p.position).collect());
        if self.aim.as_ref().map(|(id, _)| *id) != Some(obs.target_id) {
            let aims = cmd
                .iter()
                .zip(obs.mappings)
                .zip(&obs.targets)
                .map(|((h, m), t)| {
                    let start = m.map_unclamped(h);
                    m.preimage(&Self::aim_point(&start, t, obs.config.ee_radius))
                })
                .collect();
            self.aim = Some((obs.target_id, aims));
        }
        let (_, aims) = self.aim.as_ref().expect("aim set above");
        let max_step = self.speed * obs.dt;
        for (h, a) in cmd.iter_mut().zip(aims) {
            let delta = a - *h;
            let dist = delta.norm();
            if dist <= max_step {
                *h = *a;
            } else {
                *h += delta * (max_step / dist);
            }
        }
        cmd.clone()
    }
}

fn poses(positions: &[Vec3], current: &[Pose6D]) -> Vec<Pose6D> {
    positions
        .iter()
        .zip(current)
        .map(|(p, c)| Pose6D::new(*p, c.orientation))
        .collect()
}

impl OperatorSource for OptimalOperator {
    fn name(&self) -> String {
        "optimal".into()
    }

    fn poll(&mut self, obs: &Observation<'_>) -> OperatorPoll {
        let next = self.next_positions(obs);
        OperatorPoll::Inputs(vec![poses(&next, obs.human)])
    }
}

/// The optimal operator's path plus Ornstein-Uhlenbeck wrist noise. The
/// noise amplitude is given at the end-effector: the wrist offset is the
/// noise divided by the control scale.
#[derive(Debug, Clone)]
pub struct NoisyOperator {
    inner: OptimalOperator,
    sigma: f64,
    tau: f64,
    rng: TargetRng,
    noise: Vec<Vec3>,
}

impl NoisyOperator {
    pub fn new(speed: f64, sigma: f64, tau: f64, seed: u64) -> Self {
        Self {
            inner: OptimalOperator::new(speed),
            sigma,
            tau,
            rng: TargetRng::new(seed ^ 0x6e6f_6973_795f_6f70),
            noise: Vec::new(),
        }
    }

    pub fn from_config(cfg: &GameConfig) -> Self {
        let o = &cfg.operator;
        Self::new(o.human_speed, o.noise_sigma, o.noise_tau, cfg.rng_seed)
    }
}

impl OperatorSource for NoisyOperator {
    fn name(&self) -> String {
        format!("noisy:{}", self.sigma)
    }

    fn poll(&mut self, obs: &Observation<'_>) -> OperatorPoll {
        let mut next = self.inner.next_positions(obs);
        if self.noise.len() != next.len() {
            self.noise = vec![Vec3::zeros(); next.len()];
        }
        // Exact discretization of the OU process over one tick.
        let a = libm::exp(-obs.dt / self.tau);
        let b = self.sigma * libm::sqrt(1.0 - a * a);
        for ((n, p), m) in self.noise.iter_mut().zip(next.iter_mut()).zip(obs.mappings) {
            for k in 0..3 {
                n[k] = a * n[k] + b * self.rng.next_normal();
            }
            *p += *n / m.gamma;
        }
        OperatorPoll::Inputs(vec![poses(&next, obs.human)])
    }
}

/// Re-emits the inputs of a recording at the ticks that consumed them.
#[derive(Debug, Clone)]
pub struct ReplayOperator {
    inputs: BTreeMap<u64, Vec<Vec<Pose6D>>>,
    ticks: u64,
}

impl ReplayOperator {
    pub fn from_recording(rec: &Recording, arms: usize) -> Result<Self, SimulatorError> {
        let mut inputs: BTreeMap<u64, Vec<Vec<Pose6D>>> = BTreeMap::new();
        for line in &rec.body {
            if let RecordLine::Input(i) = line {
                if i.poses.len() != arms {
                    return Err(SimulatorError::Recording(format!(
                        "input at tick {} has {} poses, session has {arms} arms",
                        i.tick,
                        i.poses.len()
                    )));
                }
                inputs.entry(i.tick).or_default().push(i.poses.clone());
            }
        }
        Ok(Self {
            inputs,
            ticks: rec.trailer.ticks,
        })
    }
}

impl OperatorSource for ReplayOperator {
    fn name(&self) -> String {
        "replay".into()
    }

    fn poll(&mut self, obs: &Observation<'_>) -> OperatorPoll {
        if obs.tick >= self.ticks {
            return OperatorPoll::Exhausted;
        }
        OperatorPoll::Inputs(self.inputs.remove(&obs.tick).unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{run_session, RecordLine};

    #[test]
    fn aim_point_is_inside_with_margin() {
        let t = Sphere::new(Vec3::new(1.0, 0.0, 0.0), 0.08).unwrap();
        let a = OptimalOperator::aim_point(&Vec3::zeros(), &t, 0.04);
        assert!(((a - t.center()).norm() - 0.036).abs() < 1e-15);
        assert!(a.y == 0.0 && a.z == 0.0);
        let near = Vec3::new(0.99, 0.0, 0.0);
        assert_eq!(OptimalOperator::aim_point(&near, &t, 0.04), near);
    }

    #[test]
    fn preimage_reproduces_waypoint() {
        let cfg = GameConfig::builtin("large_large").unwrap();
        let maps = cfg.mappings();
        let t = Sphere::new(Vec3::new(0.5, 0.9, 0.1), 0.12).unwrap();
        let aim = OptimalOperator::aim_point(&maps[0].target_center, &t, 0.06);
        let h = maps[0].preimage(&aim);
        assert!((maps[0].map_unclamped(&h) - aim).norm() < 1e-9);
    }

    #[test]
    fn unit_scale_human_path_equals_robot_path() {
        let mut cfg = GameConfig::builtin("medium_small").unwrap();
        for a in &mut cfg.arms {
            a.human_center = a.workspace_center;
        }
        cfg.session_duration = 5.0;
        let (_, rec) = run_session(&cfg, &mut OptimalOperator::new(0.25)).unwrap();
        let mut frames = 0;
        for line in &rec.body {
            if let RecordLine::Frame(f) = line {
                for (h, e) in f.human.iter().zip(&f.ee) {
                    assert!((h.position - Vec3::from(*e)).norm() < 1e-12);
                }
                frames += 1;
            }
        }
        assert_eq!(frames, 500);
    }

    #[test]
    fn zero_sigma_matches_optimal() {
        let mut cfg = GameConfig::builtin("medium_medium").unwrap();
        cfg.session_duration = 5.0;
        let (_, a) = run_session(&cfg, &mut OptimalOperator::new(0.25)).unwrap();
        let (_, b) = run_session(&cfg, &mut NoisyOperator::new(0.25, 0.0, 0.5, 3)).unwrap();
        let frames = |r: &Recording| -> Vec<RecordLine> { r.body.clone() };
        assert_eq!(frames(&a), frames(&b));
        assert_eq!(a.trailer, b.trailer);
    }
}
