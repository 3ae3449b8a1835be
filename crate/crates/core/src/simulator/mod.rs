//! Target-reaching game: seeded targets, the reached predicate, the shared
//! bimanual keep timer, and session metrics.

mod config;
pub mod operators;
pub mod recording;
mod rng;

use serde::{Deserialize, Serialize};

use crate::geometry::{Sphere, Vec3};

pub use config::{ArmConfig, GameConfig, OperatorSettings, SimulatorError};
pub use operators::{
    NoisyOperator, Observation, OperatorPoll, OperatorSource, OptimalOperator, ReplayOperator,
};
pub use recording::{run_session, verify, Recording, RecordLine, Simulation, VerifyReport};
pub use rng::{TargetRng, RNG_NAME};

/// Slack on the keep-time comparison so that `n · dt` sums reach `keep_time`
/// on the intended tick.
pub const KEEP_TIME_EPS: f64 = 1e-9;

/// True iff the EE sphere lies entirely inside the target sphere.
pub fn reached(ee: &Sphere, target: &Sphere) -> bool {
    (ee.center() - target.center()).norm() <= target.radius() - ee.radius()
}

/// Uniform sample from the ball of radius `workspace − target_radius`.
pub fn spawn_target(rng: &mut TargetRng, workspace: &Sphere, target_radius: f64) -> Sphere {
    let support = workspace.radius() - target_radius;
    let r = support * libm::cbrt(rng.next_f64());
    let z = 1.0 - 2.0 * rng.next_f64();
    let phi = std::f64::consts::TAU * rng.next_f64();
    let s = libm::sqrt((1.0 - z * z).max(0.0));
    let dir = Vec3::new(s * libm::cos(phi), s * libm::sin(phi), z);
    Sphere::new(workspace.center() + r * dir, target_radius).expect("target radius is positive")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Timeout,
}

/// One target pair (one target per arm) from spawn to resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub id: u64,
    pub spawn_time: f64,
    pub spawn_ee: Vec<Vec3>,
    pub targets: Vec<Vec3>,
    pub path: Vec<f64>,
    pub resolved: Option<(Outcome, f64)>,
}

impl PairRecord {
    fn new(id: u64, spawn_time: f64, spawn_ee: Vec<Vec3>, targets: Vec<Vec3>) -> Self {
        let path = vec![0.0; spawn_ee.len()];
        Self {
            id,
            spawn_time,
            spawn_ee,
            targets,
            path,
            resolved: None,
        }
    }
}

/// Per-step view of the evaluated target pair, taken before any respawn.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub inside: Vec<bool>,
    pub keep_timer: f64,
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone)]
pub struct ArmState {
    pub workspace: Sphere,
    pub ee: Vec3,
    pub target: Sphere,
    pub inside: bool,
    pub inside_since: Option<f64>,
    pub total_path: f64,
}

#[derive(Debug, Clone)]
pub struct GameState {
    target_radius: f64,
    ee_radius: f64,
    keep_time: f64,
    target_timeout: f64,
    rng: TargetRng,
    pub clock: f64,
    pub keep_timer: f64,
    pub arms: Vec<ArmState>,
    pub current: PairRecord,
    pub records: Vec<PairRecord>,
    pub completed: usize,
    pub spawned: usize,
}

impl GameState {
    pub fn new(cfg: &GameConfig, initial_ee: &[Vec3]) -> Self {
        let mut rng = TargetRng::new(cfg.rng_seed);
        let workspaces = cfg.workspaces();
        assert_eq!(initial_ee.len(), workspaces.len(), "one EE per arm");
        let arms: Vec<ArmState> = workspaces
            .iter()
            .zip(initial_ee)
            .map(|(ws, ee)| ArmState {
                workspace: *ws,
                ee: *ee,
                target: spawn_target(&mut rng, ws, cfg.target_radius),
                inside: false,
                inside_since: None,
                total_path: 0.0,
            })
            .collect();
        let current = PairRecord::new(
            0,
            0.0,
            initial_ee.to_vec(),
            arms.iter().map(|a| a.target.center()).collect(),
        );
        Self {
            target_radius: cfg.target_radius,
            ee_radius: cfg.ee_radius,
            keep_time: cfg.keep_time,
            target_timeout: cfg.target_timeout,
            rng,
            clock: 0.0,
            keep_timer: 0.0,
            arms,
            current,
            records: Vec::new(),
            completed: 0,
            spawned: 1,
        }
    }

    pub fn targets(&self) -> Vec<Sphere> {
        self.arms.iter().map(|a| a.target).collect()
    }

    /// Advances the game by `dt` with the arms' new EE positions.
    pub fn step(&mut self, ee: &[Vec3], dt: f64) -> StepResult {
        assert!(dt > 0.0, "dt must be positive");
        assert_eq!(ee.len(), self.arms.len(), "one EE per arm");
        self.clock += dt;
        let mut all_inside = true;
        for (i, (arm, p)) in self.arms.iter_mut().zip(ee).enumerate() {
            let d = (p - arm.ee).norm();
            arm.total_path += d;
            self.current.path[i] += d;
            arm.ee = *p;
            let sphere = Sphere::new(*p, self.ee_radius).expect("ee radius is positive");
            arm.inside = reached(&sphere, &arm.target);
            if arm.inside {
                arm.inside_since.get_or_insert(self.clock);
            } else {
                arm.inside_since = None;
                all_inside = false;
            }
        }
        if all_inside {
            self.keep_timer += dt;
        } else {
            self.keep_timer = 0.0;
        }

        let outcome = if all_inside && self.keep_timer >= self.keep_time - KEEP_TIME_EPS {
            Some(Outcome::Success)
        } else if self.clock - self.current.spawn_time >= self.target_timeout - KEEP_TIME_EPS {
            Some(Outcome::Timeout)
        } else {
            None
        };
        let result = StepResult {
            inside: self.arms.iter().map(|a| a.inside).collect(),
            keep_timer: self.keep_timer,
            outcome,
        };
        if let Some(o) = outcome {
            if o == Outcome::Success {
                self.completed += 1;
            }
            self.respawn(o);
        }
        result
    }

    fn respawn(&mut self, outcome: Outcome) {
        for arm in &mut self.arms {
            arm.target = spawn_target(&mut self.rng, &arm.workspace, self.target_radius);
            arm.inside = false;
            arm.inside_since = None;
        }
        self.keep_timer = 0.0;
        let next = PairRecord::new(
            self.current.id + 1,
            self.clock,
            self.arms.iter().map(|a| a.ee).collect(),
            self.arms.iter().map(|a| a.target.center()).collect(),
        );
        let mut done = std::mem::replace(&mut self.current, next);
        done.resolved = Some((outcome, self.clock));
        self.records.push(done);
        self.spawned += 1;
    }

    pub fn metrics(&self) -> SessionMetrics {
        let total: Vec<f64> = self.arms.iter().map(|a| a.total_path).collect();
        compute_metrics(
            &self.records,
            &total,
            self.clock,
            self.target_radius - self.ee_radius,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionMetrics {
    pub avg_reach_time: Option<f64>,
    pub avg_reach_velocity: Option<f64>,
    pub avg_ee_velocity: f64,
    pub effective_ratio: Option<f64>,
    pub success_rate: f64,
    pub completed: usize,
    pub timed_out: usize,
}

/// Metrics over resolved target pairs.
///
/// `total_path` is each arm's path over the whole session and `tolerance`
/// is `r_target − r_ee`. A pair still in progress at the end is left out of
/// the success-rate denominator; timed-out pairs are counted.
pub fn compute_metrics(
    records: &[PairRecord],
    total_path: &[f64],
    duration: f64,
    tolerance: f64,
) -> SessionMetrics {
    let arms = total_path.len().max(1) as f64;
    let mut completed = 0usize;
    let mut timed_out = 0usize;
    let mut reach_time = 0.0;
    let mut reach_velocity = 0.0;
    let mut optimal = 0.0;
    let mut actual = 0.0;
    for r in records {
        match r.resolved {
            Some((Outcome::Success, t)) => {
                completed += 1;
                let dt = t - r.spawn_time;
                reach_time += dt;
                let mut v = 0.0;
                for ((p, c), path) in r.spawn_ee.iter().zip(&r.targets).zip(&r.path) {
                    let d = (p - c).norm();
                    v += if dt > 0.0 { d / dt } else { 0.0 };
                    optimal += (d - tolerance).max(0.0);
                    actual += path;
                }
                reach_velocity += v / arms;
            }
            Some((Outcome::Timeout, _)) => timed_out += 1,
            None => {}
        }
    }
    let n = completed as f64;
    let avg_ee_velocity = if duration > 0.0 {
        total_path.iter().map(|p| p / duration).sum::<f64>() / arms
    } else {
        0.0
    };
    let resolved = completed + timed_out;
    SessionMetrics {
        avg_reach_time: (completed > 0).then(|| reach_time / n),
        avg_reach_velocity: (completed > 0).then(|| reach_velocity / n),
        avg_ee_velocity,
        effective_ratio: (completed > 0).then(|| if actual > 0.0 { optimal / actual } else { 1.0 }),
        success_rate: if resolved > 0 { n / resolved as f64 } else { 0.0 },
        completed,
        timed_out,
    }
}
