//! Hand mode and gripper mode.
//!
//! Hand mode solves, per frame,
//!
//! ```text
//! min_q  Σ_i |α v_i − f_i(q)|² + β |q − q_prev|²     s.t.  q_l ≤ q ≤ q_u
//! ```
//!
//! where `v_i` are human keypoint vectors in the wrist frame and `f_i` is the
//! tool position of the robot-hand chain paired with vector `i`. The solver is
//! a projected Gauss-Newton method: variables pinned at a bound with the
//! gradient pushing outward are frozen, the reduced normal equations give the
//! step, and an Armijo backtracking search along the projected path keeps the
//! objective monotone.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::kinematics::{ChainDoc, JointVector, KinematicChain, KinematicsError};

pub const NUM_KEYPOINTS: usize = 21;
pub const WRIST: usize = 0;
pub const THUMB_TIP: usize = 4;
pub const INDEX_TIP: usize = 8;
pub const MIDDLE_TIP: usize = 12;
pub const RING_TIP: usize = 16;
pub const PINKY_TIP: usize = 20;
pub const FINGERTIPS: [usize; 5] = [THUMB_TIP, INDEX_TIP, MIDDLE_TIP, RING_TIP, PINKY_TIP];

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("hand frame wrist keypoint is {0} m from the origin; keypoints must be wrist-relative")]
    WristNotAtOrigin(f64),
    #[error("hand frame contains non-finite keypoints")]
    NonFinite,
    #[error("keypoint index {0} out of range")]
    BadKeypointIndex(usize),
    #[error("expected {expected} keypoint vectors, got {got}")]
    VectorCount { expected: usize, got: usize },
    #[error("previous joint vector is invalid: {0}")]
    InvalidPrevious(String),
    #[error("invalid hand model: {0}")]
    InvalidModel(String),
    #[error("invalid retarget config: {0}")]
    InvalidConfig(String),
    #[error("objective increased across an accepted step ({before} -> {after})")]
    Diverged { before: f64, after: f64 },
    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<RetargetError>,
    },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("failed to parse hand model: {0}")]
    Parse(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// 21 hand landmarks in the wrist frame, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HandFrameRepr", into = "HandFrameRepr")]
pub struct HandFrame {
    timestamp: f64,
    keypoints: [Vec3; NUM_KEYPOINTS],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HandFrameRepr {
    timestamp: f64,
    keypoints: [[f64; 3]; NUM_KEYPOINTS],
}

impl TryFrom<HandFrameRepr> for HandFrame {
    type Error = RetargetError;

    fn try_from(r: HandFrameRepr) -> Result<Self, Self::Error> {
        HandFrame::new(r.timestamp, r.keypoints.map(Vec3::from))
    }
}

impl From<HandFrame> for HandFrameRepr {
    fn from(f: HandFrame) -> Self {
        HandFrameRepr {
            timestamp: f.timestamp,
            keypoints: f.keypoints.map(Into::into),
        }
    }
}

impl HandFrame {
    pub fn new(timestamp: f64, keypoints: [Vec3; NUM_KEYPOINTS]) -> Result<Self, RetargetError> {
        if !timestamp.is_finite() || keypoints.iter().any(|k| !k.iter().all(|v| v.is_finite())) {
            return Err(RetargetError::NonFinite);
        }
        let wrist = keypoints[WRIST].norm();
        if wrist >= 1e-6 {
            return Err(RetargetError::WristNotAtOrigin(wrist));
        }
        Ok(Self {
            timestamp,
            keypoints,
        })
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn keypoints(&self) -> &[Vec3; NUM_KEYPOINTS] {
        &self.keypoints
    }

    pub fn keypoint(&self, i: usize) -> Vec3 {
        self.keypoints[i]
    }
}

/// A human keypoint vector: `keypoint[target] − keypoint[source]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointVectorDef {
    pub source: usize,
    pub target: usize,
}

/// The five wrist→fingertip vectors.
pub fn default_vector_defs() -> Vec<KeypointVectorDef> {
    FINGERTIPS
        .iter()
        .map(|&t| KeypointVectorDef {
            source: WRIST,
            target: t,
        })
        .collect()
}

pub fn keypoint_vectors(frame: &HandFrame, defs: &[KeypointVectorDef]) -> Vec<Vec3> {
    defs.iter()
        .map(|d| frame.keypoint(d.target) - frame.keypoint(d.source))
        .collect()
}

/// One robot keypoint vector: a chain whose joints are a subset of the
/// hand's shared joint vector.
#[derive(Debug, Clone)]
pub struct RobotVector {
    pub def: KeypointVectorDef,
    pub chain: KinematicChain,
    /// Index into the shared joint vector for each chain joint.
    pub joints: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct HandModel {
    name: String,
    joint_names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    neutral: Vec<f64>,
    vectors: Vec<RobotVector>,
    alpha: Option<f64>,
}

impl HandModel {
    /// Builds a model from chains. Chain joints with the same name are the
    /// same shared joint and must agree on limits.
    pub fn new(
        name: impl Into<String>,
        vectors: Vec<(KeypointVectorDef, KinematicChain)>,
        neutral: Option<Vec<f64>>,
        alpha: Option<f64>,
    ) -> Result<Self, RetargetError> {
        if vectors.is_empty() {
            return Err(RetargetError::InvalidModel(
                "at least one keypoint vector is required".into(),
            ));
        }
        let mut joint_names: Vec<String> = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut robot_vectors = Vec::with_capacity(vectors.len());
        for (def, chain) in vectors {
            for idx in [def.source, def.target] {
                if idx >= NUM_KEYPOINTS {
                    return Err(RetargetError::BadKeypointIndex(idx));
                }
            }
            let mut joints = Vec::with_capacity(chain.dof());
            for j in chain.joints() {
                match joint_names.iter().position(|n| n == &j.name) {
                    Some(i) => {
                        if lower[i] != j.lower || upper[i] != j.upper {
                            return Err(RetargetError::InvalidModel(format!(
                                "joint `{}` has inconsistent limits across chains",
                                j.name
                            )));
                        }
                        joints.push(i);
                    }
                    None => {
                        joint_names.push(j.name.clone());
                        lower.push(j.lower);
                        upper.push(j.upper);
                        joints.push(joint_names.len() - 1);
                    }
                }
            }
            robot_vectors.push(RobotVector { def, chain, joints });
        }
        let neutral = match neutral {
            Some(n) => {
                if n.len() != joint_names.len() {
                    return Err(RetargetError::InvalidModel(format!(
                        "neutral pose has {} values for {} joints",
                        n.len(),
                        joint_names.len()
                    )));
                }
                if n.iter().zip(lower.iter().zip(&upper)).any(|(v, (l, u))| v < l || v > u) {
                    return Err(RetargetError::InvalidModel(
                        "neutral pose violates joint limits".into(),
                    ));
                }
                n
            }
            None => lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect(),
        };
        if let Some(a) = alpha {
            if !(a > 0.0) {
                return Err(RetargetError::InvalidModel(format!("alpha must be positive, got {a}")));
            }
        }
        Ok(Self {
            name: name.into(),
            joint_names,
            lower,
            upper,
            neutral,
            vectors: robot_vectors,
            alpha,
        })
    }

    pub fn from_toml_str(doc: &str) -> Result<Self, RetargetError> {
        let d: HandModelDoc = toml::from_str(doc).map_err(|e| RetargetError::Parse(e.to_string()))?;
        let vectors = d
            .vectors
            .into_iter()
            .map(|v| {
                Ok((
                    KeypointVectorDef {
                        source: v.source,
                        target: v.target,
                    },
                    v.chain.into_chain()?,
                ))
            })
            .collect::<Result<Vec<_>, RetargetError>>()?;
        Self::new(d.name, vectors, d.neutral, d.alpha)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetargetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RetargetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn neutral(&self) -> JointVector {
        JointVector(self.neutral.clone())
    }

    pub fn vectors(&self) -> &[RobotVector] {
        &self.vectors
    }

    pub fn vector_defs(&self) -> Vec<KeypointVectorDef> {
        self.vectors.iter().map(|v| v.def).collect()
    }

    /// α stored in the model document, if any.
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof()
            && q.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn project(&self, q: &mut [f64]) {
        for ((v, l), u) in q.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Robot keypoint vectors `f_i(q)`.
    pub fn robot_vectors(&self, q: &[f64]) -> Vec<Vec3> {
        let mut sub = Vec::new();
        self.vectors
            .iter()
            .map(|rv| {
                sub.clear();
                sub.extend(rv.joints.iter().map(|&i| q[i]));
                crate::kinematics::forward_kinematics(&rv.chain, &sub)
                    .expect("sub-vector matches chain")
                    .position
            })
            .collect()
    }

    /// Hand-size ratio: reach of the robot middle-finger chain (or the
    /// longest chain when no vector ends at the middle fingertip) over the
    /// human wrist→middle-tip distance.
    pub fn default_alpha(&self, human: &HandFrame) -> f64 {
        let robot = self
            .vectors
            .iter()
            .find(|v| v.def.target == MIDDLE_TIP)
            .map(|v| chain_span(&v.chain))
            .unwrap_or_else(|| {
                self.vectors
                    .iter()
                    .map(|v| chain_span(&v.chain))
                    .fold(0.0, f64::max)
            });
        let human_len = (human.keypoint(MIDDLE_TIP) - human.keypoint(WRIST)).norm();
        robot / human_len
    }
}

/// Base-to-tip distance along the fully extended chain.
fn chain_span(chain: &KinematicChain) -> f64 {
    chain
        .joints()
        .iter()
        .map(|j| j.origin.translation.norm())
        .sum::<f64>()
        + chain.tool().translation.norm()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HandModelDoc {
    name: String,
    #[serde(default)]
    neutral: Option<Vec<f64>>,
    #[serde(default)]
    alpha: Option<f64>,
    vectors: Vec<VectorDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorDoc {
    source: usize,
    target: usize,
    chain: ChainDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetargetConfig {
    /// Human→robot hand-size scale α.
    pub alpha: f64,
    /// Temporal smoothness weight β.
    pub beta: f64,
    /// Optional per-vector α; replaces `alpha` when present.
    #[serde(default)]
    pub alpha_per_vector: Option<Vec<f64>>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Stop when the projected gradient, divided by the squared hand scale, falls below this.
    #[serde(default = "default_gradient_tolerance")]
    pub gradient_tolerance: f64,
}

fn default_max_iters() -> usize {
    50
}

fn default_gradient_tolerance() -> f64 {
    1e-8
}

pub const DEFAULT_BETA: f64 = 0.01;

impl Default for RetargetConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: DEFAULT_BETA,
            alpha_per_vector: None,
            max_iters: default_max_iters(),
            gradient_tolerance: default_gradient_tolerance(),
        }
    }
}

impl RetargetConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self, vectors: usize) -> Result<(), RetargetError> {
        if !(self.alpha > 0.0) {
            return Err(RetargetError::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 0.0) {
            return Err(RetargetError::InvalidConfig(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        if let Some(a) = &self.alpha_per_vector {
            if a.len() != vectors || a.iter().any(|v| !(*v > 0.0)) {
                return Err(RetargetError::InvalidConfig(
                    "alpha_per_vector must hold one positive value per vector".into(),
                ));
            }
        }
        Ok(())
    }

    fn alpha_for(&self, i: usize) -> f64 {
        self.alpha_per_vector
            .as_ref()
            .map_or(self.alpha, |a| a[i])
    }
}

/// Objective value, its gradient, and the stacked residual/Jacobian
/// (`objective = |r|²`).
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    residual: DVector<f64>,
    jacobian: DMatrix<f64>,
}

pub fn objective(
    model: &HandModel,
    targets: &[Vec3],
    q: &[f64],
    q_prev: &[f64],
    cfg: &RetargetConfig,
) -> f64 {
    let f = model.robot_vectors(q);
    let fit: f64 = f
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (fi, v))| (cfg.alpha_for(i) * v - fi).norm_squared())
        .sum();
    let smooth: f64 = q
        .iter()
        .zip(q_prev)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    fit + cfg.beta * smooth
}

pub fn evaluate(
    model: &HandModel,
    targets: &[Vec3],
    q: &[f64],
    q_prev: &[f64],
    cfg: &RetargetConfig,
) -> Evaluation {
    let n = model.vectors.len();
    let d = model.dof();
    let sqrt_beta = cfg.beta.sqrt();
    let mut residual = DVector::zeros(3 * n + d);
    let mut jacobian = DMatrix::zeros(3 * n + d, d);
    let mut sub = Vec::new();
    for (i, rv) in model.vectors.iter().enumerate() {
        sub.clear();
        sub.extend(rv.joints.iter().map(|&k| q[k]));
        let (tip, jac) = rv
            .chain
            .position_jacobian(&sub)
            .expect("sub-vector matches chain");
        let r = cfg.alpha_for(i) * targets[i] - tip;
        residual.fixed_rows_mut::<3>(3 * i).copy_from(&r);
        for (c, &k) in rv.joints.iter().enumerate() {
            for row in 0..3 {
                jacobian[(3 * i + row, k)] -= jac[(row, c)];
            }
        }
    }
    for k in 0..d {
        residual[3 * n + k] = sqrt_beta * (q[k] - q_prev[k]);
        jacobian[(3 * n + k, k)] = sqrt_beta;
    }
    let value = residual.norm_squared();
    let gradient = 2.0 * jacobian.transpose() * &residual;
    Evaluation {
        value,
        gradient,
        residual,
        jacobian,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub q: JointVector,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    /// Projected gradient norm relative to the squared hand scale.
    pub projected_gradient_norm: f64,
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;

/// One retargeting solve, warm-started at `q_prev`.
pub fn retarget_step(
    targets: &[Vec3],
    q_prev: &[f64],
    model: &HandModel,
    cfg: &RetargetConfig,
) -> Result<StepReport, RetargetError> {
    cfg.validate(model.vectors.len())?;
    if targets.len() != model.vectors.len() {
        return Err(RetargetError::VectorCount {
            expected: model.vectors.len(),
            got: targets.len(),
        });
    }
    if q_prev.len() != model.dof() {
        return Err(RetargetError::InvalidPrevious(format!(
            "{} values for {} joints",
            q_prev.len(),
            model.dof()
        )));
    }
    if !model.within_limits(q_prev) {
        return Err(RetargetError::InvalidPrevious("outside joint limits".into()));
    }

    let initial_objective = evaluate(model, targets, q_prev, q_prev, cfg).value;
    // Objective units are m²; the stop test is taken relative to hand size.
    let scale = targets
        .iter()
        .enumerate()
        .map(|(i, v)| (cfg.alpha_for(i) * v).norm_squared())
        .sum::<f64>()
        .max(model.robot_vectors(q_prev).iter().map(|f| f.norm_squared()).sum())
        .max(f64::MIN_POSITIVE);

    // The box corners trap descent in a few poses, so the range centre and
    // both corners are tried as well. Ties keep the warm start.
    let mut best = descend(q_prev.to_vec(), targets, q_prev, model, cfg, scale)?;
    let mut iterations = best.iterations;
    let mid: Vec<f64> = model.lower.iter().zip(&model.upper).map(|(l, u)| 0.5 * (l + u)).collect();
    for start in [mid, model.lower.clone(), model.upper.clone()] {
        let candidate = descend(start, targets, q_prev, model, cfg, scale)?;
        iterations += candidate.iterations;
        if candidate.objective < best.objective {
            best = candidate;
        }
    }
    best.iterations = iterations;
    best.initial_objective = initial_objective;
    Ok(best)
}

fn descend(
    mut q: Vec<f64>,
    targets: &[Vec3],
    q_prev: &[f64],
    model: &HandModel,
    cfg: &RetargetConfig,
    scale: f64,
) -> Result<StepReport, RetargetError> {
    let d = model.dof();
    let mut eval = evaluate(model, targets, &q, q_prev, cfg);
    let initial_objective = eval.value;
    let mut iterations = 0;
    let mut pg_norm = projected_gradient_norm(model, &q, &eval.gradient) / scale;

    while iterations < cfg.max_iters && pg_norm >= cfg.gradient_tolerance {
        iterations += 1;

        // Freeze variables held at a bound by the gradient.
        let free: Vec<usize> = (0..d)
            .filter(|&k| {
                let g = eval.gradient[k];
                !((q[k] <= model.lower[k] && g > 0.0) || (q[k] >= model.upper[k] && g < 0.0))
            })
            .collect();
        let mut direction = DVector::zeros(d);
        if !free.is_empty() {
            let jf = eval.jacobian.select_columns(free.iter());
            let mut normal = jf.transpose() * &jf;
            let reg = 1e-12 * normal.diagonal().amax().max(1.0);
            for k in 0..free.len() {
                normal[(k, k)] += reg;
            }
            let rhs = -(jf.transpose() * &eval.residual);
            if let Some(chol) = Cholesky::new(normal) {
                let step = chol.solve(&rhs);
                for (c, &k) in free.iter().enumerate() {
                    direction[k] = step[c];
                }
            }
        }
        if direction.dot(&eval.gradient) >= 0.0 {
            direction = -&eval.gradient;
        }

        let mut t = 1.0;
        let accepted = loop {
            let mut trial: Vec<f64> = q.iter().zip(direction.iter()).map(|(a, b)| a + t * b).collect();
            model.project(&mut trial);
            let decrease: f64 = trial
                .iter()
                .zip(&q)
                .zip(eval.gradient.iter())
                .map(|((a, b), g)| g * (a - b))
                .sum();
            let trial_eval = evaluate(model, targets, &trial, q_prev, cfg);
            if trial_eval.value <= eval.value + ARMIJO * decrease.min(0.0) {
                break Some((trial, trial_eval));
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((next, next_eval)) = accepted else { break };
        if next_eval.value > eval.value {
            return Err(RetargetError::Diverged {
                before: eval.value,
                after: next_eval.value,
            });
        }
        q = next;
        eval = next_eval;
        pg_norm = projected_gradient_norm(model, &q, &eval.gradient) / scale;
    }

    Ok(StepReport {
        q: JointVector(q),
        objective: eval.value,
        initial_objective,
        iterations,
        projected_gradient_norm: pg_norm,
    })
}

fn projected_gradient_norm(model: &HandModel, q: &[f64], g: &DVector<f64>) -> f64 {
    let mut stepped: Vec<f64> = q.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
    model.project(&mut stepped);
    q.iter()
        .zip(&stepped)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Per-hand retargeting state: threads `q_prev` through a frame stream.
#[derive(Debug, Clone)]
pub struct HandRetargeter {
    model: HandModel,
    cfg: RetargetConfig,
    defs: Vec<KeypointVectorDef>,
    q_prev: JointVector,
}

impl HandRetargeter {
    pub fn new(model: HandModel, cfg: RetargetConfig) -> Result<Self, RetargetError> {
        cfg.validate(model.vectors.len())?;
        let defs = model.vector_defs();
        let q_prev = model.neutral();
        Ok(Self {
            model,
            cfg,
            defs,
            q_prev,
        })
    }

    pub fn model(&self) -> &HandModel {
        &self.model
    }

    pub fn last(&self) -> &JointVector {
        &self.q_prev
    }

    pub fn step(&mut self, frame: &HandFrame) -> Result<JointVector, RetargetError> {
        let v = keypoint_vectors(frame, &self.defs);
        let report = retarget_step(&v, &self.q_prev, &self.model, &self.cfg)?;
        self.q_prev = report.q.clone();
        Ok(report.q)
    }
}

pub fn retarget_stream<'a>(
    frames: impl IntoIterator<Item = &'a HandFrame>,
    model: &HandModel,
    cfg: &RetargetConfig,
) -> Result<Vec<JointVector>, RetargetError> {
    let mut r = HandRetargeter::new(model.clone(), cfg.clone())?;
    frames
        .into_iter()
        .enumerate()
        .map(|(index, f)| {
            r.step(f).map_err(|e| RetargetError::Frame {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Thumb-index distances that map to a closed (0) and open (1) gripper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperCalibration {
    pub min_dist: f64,
    pub max_dist: f64,
}

impl Default for GripperCalibration {
    fn default() -> Self {
        Self {
            min_dist: 0.02,
            max_dist: 0.12,
        }
    }
}

pub fn aperture_from_distance(d: f64, calib: &GripperCalibration) -> f64 {
    ((d - calib.min_dist) / (calib.max_dist - calib.min_dist)).clamp(0.0, 1.0)
}

pub fn gripper_aperture(frame: &HandFrame, calib: &GripperCalibration) -> f64 {
    let d = (frame.keypoint(THUMB_TIP) - frame.keypoint(INDEX_TIP)).norm();
    aperture_from_distance(d, calib)
}

/// Simple synthetic human hand used by scripted operators and tests.
///
/// Fingers lie in the wrist frame's +y direction, spread along x; each
/// finger flexes in its y-z plane by `curl` radians per joint. The thumb
/// points along +x from a base beside the palm and flexes toward +y.
pub fn synthetic_hand(timestamp: f64, curls: [f64; 5]) -> HandFrame {
    const PALM: f64 = 0.09;
    const BASE_X: [f64; 4] = [0.03, 0.01, -0.01, -0.03];
    const SEGMENTS: [[f64; 3]; 4] = [
        [0.045, 0.025, 0.02],
        [0.05, 0.03, 0.022],
        [0.045, 0.028, 0.02],
        [0.035, 0.02, 0.018],
    ];
    let mut k = [Vec3::zeros(); NUM_KEYPOINTS];

    // Thumb: CMC, MCP, IP, TIP.
    let thumb_base = Vec3::new(0.025, 0.025, 0.0);
    let thumb_segments = [0.04, 0.032, 0.028];
    k[1] = thumb_base;
    let mut p = thumb_base;
    let mut angle = 0.0;
    for (s, len) in thumb_segments.iter().enumerate() {
        angle += curls[0];
        p += Vec3::new(angle.cos(), angle.sin(), 0.0) * *len;
        k[2 + s] = p;
    }

    for f in 0..4 {
        let base = 5 + 4 * f;
        let mcp = Vec3::new(BASE_X[f], PALM, 0.0);
        k[base] = mcp;
        let mut p = mcp;
        let mut angle = 0.0;
        for (s, len) in SEGMENTS[f].iter().enumerate() {
            angle += curls[f + 1];
            p += Vec3::new(0.0, angle.cos(), angle.sin()) * *len;
            k[base + 1 + s] = p;
        }
    }
    HandFrame::new(timestamp, k).expect("synthetic hand is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PLANAR: &str = include_str!("../../../configs/hands/planar_finger.toml");
    const TWO_FINGER: &str = include_str!("../../../configs/hands/two_finger.toml");
    const FIVE_FINGER: &str = include_str!("../../../configs/hands/five_finger.toml");

    fn planar() -> HandModel {
        HandModel::from_toml_str(PLANAR).unwrap()
    }

    fn frame_with(points: &[(usize, Vec3)]) -> HandFrame {
        let mut k = [Vec3::zeros(); NUM_KEYPOINTS];
        for &(i, p) in points {
            k[i] = p;
        }
        HandFrame::new(0.0, k).unwrap()
    }

    #[test]
    fn degenerate_hand_gives_zero_vectors() {
        let f = frame_with(&[]);
        let v = keypoint_vectors(&f, &default_vector_defs());
        assert_eq!(v.len(), 5);
        assert!(v.iter().all(|x| *x == Vec3::zeros()));
    }

    #[test]
    fn index_vector_is_a_subtraction() {
        let f = frame_with(&[(INDEX_TIP, Vec3::new(0.0, 0.18, 0.0))]);
        let v = keypoint_vectors(&f, &default_vector_defs());
        assert_eq!(v[1], Vec3::new(0.0, 0.18, 0.0));
    }

    #[test]
    fn flat_synthetic_hand_vectors() {
        let f = synthetic_hand(0.0, [0.0; 5]);
        let v = keypoint_vectors(&f, &default_vector_defs());
        // thumb: (0.025, 0.025, 0) + 0.1 m along +x
        assert_abs_diff_eq!(v[0], Vec3::new(0.125, 0.025, 0.0), epsilon = 1e-15);
        // index: MCP at (0.03, 0.09, 0), 0.09 m of phalanges along +y
        assert_abs_diff_eq!(v[1], Vec3::new(0.03, 0.18, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], Vec3::new(0.01, 0.192, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(v[3], Vec3::new(-0.01, 0.183, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(v[4], Vec3::new(-0.03, 0.163, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn wrist_must_be_origin() {
        let mut k = [Vec3::zeros(); NUM_KEYPOINTS];
        k[0] = Vec3::new(0.0, 0.0, 1e-3);
        assert!(matches!(HandFrame::new(0.0, k), Err(RetargetError::WristNotAtOrigin(_))));
        let json = r#"{"timestamp":0.0,"keypoints":[[0,0,0]]}"#;
        assert!(serde_json::from_str::<HandFrame>(json).is_err());
    }

    #[test]
    fn hand_frame_json_round_trip() {
        let f = synthetic_hand(1.25, [0.1, 0.2, 0.3, 0.4, 0.5]);
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<HandFrame>(&json).unwrap(), f);
    }

    #[test]
    fn shipped_models_load() {
        assert_eq!(planar().dof(), 2);
        let two = HandModel::from_toml_str(TWO_FINGER).unwrap();
        assert_eq!(two.dof(), 3);
        assert_eq!(two.vectors().len(), 2);
        let five = HandModel::from_toml_str(FIVE_FINGER).unwrap();
        assert_eq!(five.dof(), 10);
        assert_eq!(five.vector_defs(), default_vector_defs());
    }

    #[test]
    fn inconsistent_shared_limits_are_rejected() {
        let doc = r#"
            name = "bad"
            [[vectors]]
            source = 0
            target = 8
            [vectors.chain]
            name = "a"
            [[vectors.chain.joints]]
            name = "j"
            axis = [1.0, 0.0, 0.0]
            limits = [0.0, 1.0]
            [[vectors]]
            source = 0
            target = 12
            [vectors.chain]
            name = "b"
            [[vectors.chain.joints]]
            name = "j"
            axis = [1.0, 0.0, 0.0]
            limits = [0.0, 2.0]
        "#;
        assert!(matches!(HandModel::from_toml_str(doc), Err(RetargetError::InvalidModel(_))));
    }

    #[test]
    fn zero_residual_is_a_fixed_point() {
        let model = HandModel::from_toml_str(FIVE_FINGER).unwrap();
        let cfg = RetargetConfig::with_alpha(1.3);
        let q_prev = vec![0.3, 0.2, 0.5, 0.4, 0.7, 0.1, 0.6, 0.9, 0.2, 0.3];
        let v: Vec<Vec3> = model.robot_vectors(&q_prev).iter().map(|f| f / cfg.alpha).collect();
        let r = retarget_step(&v, &q_prev, &model, &cfg).unwrap();
        for (a, b) in r.q.iter().zip(&q_prev) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(r.objective < 1e-20);
    }

    #[test]
    fn huge_beta_pins_previous_pose() {
        let model = HandModel::from_toml_str(FIVE_FINGER).unwrap();
        let cfg = RetargetConfig::with_alpha(1.0).with_beta(1e6);
        let q_prev = model.neutral();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let curls = [(); 5].map(|_| rng.random_range(0.0..1.2));
            let v = keypoint_vectors(&synthetic_hand(0.0, curls), &model.vector_defs());
            let r = retarget_step(&v, &q_prev, &model, &cfg).unwrap();
            for (a, b) in r.q.iter().zip(q_prev.iter()) {
                assert!((a - b).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn result_respects_limits_and_never_increases_objective() {
        let model = HandModel::from_toml_str(FIVE_FINGER).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for beta in [0.0, 0.01, 1.0] {
            let cfg = RetargetConfig::with_alpha(1.0).with_beta(beta);
            for _ in 0..50 {
                // Targets deliberately outside the reachable set.
                let v: Vec<Vec3> = (0..5)
                    .map(|_| {
                        Vec3::new(
                            rng.random_range(-0.3..0.3),
                            rng.random_range(-0.3..0.3),
                            rng.random_range(-0.3..0.3),
                        )
                    })
                    .collect();
                let q_prev: Vec<f64> = model
                    .lower()
                    .iter()
                    .zip(model.upper())
                    .map(|(l, u)| rng.random_range(*l..=*u))
                    .collect();
                let r = retarget_step(&v, &q_prev, &model, &cfg).unwrap();
                assert!(model.within_limits(&r.q));
                assert!(r.objective <= r.initial_objective);
                assert_abs_diff_eq!(
                    r.initial_objective,
                    objective(&model, &v, &q_prev, &q_prev, &cfg),
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for doc in [PLANAR, TWO_FINGER, FIVE_FINGER] {
            let model = HandModel::from_toml_str(doc).unwrap();
            let cfg = RetargetConfig::with_alpha(rng.random_range(0.5..2.0)).with_beta(0.05);
            for _ in 0..100 {
                let q: Vec<f64> = model.lower().iter().zip(model.upper()).map(|(l, u)| rng.random_range(*l..*u)).collect();
                let q_prev: Vec<f64> = model.lower().iter().zip(model.upper()).map(|(l, u)| rng.random_range(*l..*u)).collect();
                let v: Vec<Vec3> = (0..model.vectors().len())
                    .map(|_| Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)))
                    .collect();
                let g = evaluate(&model, &v, &q, &q_prev, &cfg).gradient;
                let fd: Vec<f64> = (0..q.len())
                    .map(|k| {
                        let mut qp = q.clone();
                        let mut qm = q.clone();
                        qp[k] += h;
                        qm[k] -= h;
                        (objective(&model, &v, &qp, &q_prev, &cfg) - objective(&model, &v, &qm, &q_prev, &cfg)) / (2.0 * h)
                    })
                    .collect();
                let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-3);
                for k in 0..q.len() {
                    assert!((g[k] - fd[k]).abs() / scale < 1e-4, "{}: {} vs {}", model.name(), g[k], fd[k]);
                }
            }
        }
    }

    #[test]
    fn scaling_vectors_and_alpha_leaves_solution_unchanged() {
        let model = HandModel::from_toml_str(FIVE_FINGER).unwrap();
        let frame = synthetic_hand(0.0, [0.3, 0.5, 0.2, 0.8, 0.4]);
        let v = keypoint_vectors(&frame, &model.vector_defs());
        let c = 2.0;
        let scaled: Vec<Vec3> = v.iter().map(|x| x * c).collect();
        let a = retarget_step(&v, &model.neutral(), &model, &RetargetConfig::with_alpha(0.9)).unwrap();
        let b = retarget_step(&scaled, &model.neutral(), &model, &RetargetConfig::with_alpha(0.9 / c)).unwrap();
        assert_eq!(a.q, b.q);
    }

    #[test]
    fn per_vector_alpha_overrides_scalar() {
        let model = HandModel::from_toml_str(TWO_FINGER).unwrap();
        let v = vec![Vec3::new(0.1, 0.05, 0.0), Vec3::new(0.0, 0.15, 0.02)];
        let q = model.neutral();
        let scalar = RetargetConfig::with_alpha(1.2);
        let per = RetargetConfig {
            alpha_per_vector: Some(vec![1.2, 1.2]),
            ..RetargetConfig::with_alpha(99.0)
        };
        assert_eq!(objective(&model, &v, &q, &q, &scalar), objective(&model, &v, &q, &q, &per));
        let bad = RetargetConfig {
            alpha_per_vector: Some(vec![1.0]),
            ..RetargetConfig::default()
        };
        assert!(retarget_step(&v, &q, &model, &bad).is_err());
    }

    #[test]
    fn step_rejects_contract_violations() {
        let model = planar();
        let cfg = RetargetConfig::default();
        let v = vec![Vec3::new(0.0, 0.1, 0.0)];
        assert!(matches!(
            retarget_step(&v, &[2.0, 0.0], &model, &cfg),
            Err(RetargetError::InvalidPrevious(_))
        ));
        assert!(matches!(
            retarget_step(&[], &[0.5, 0.5], &model, &cfg),
            Err(RetargetError::VectorCount { .. })
        ));
        assert!(retarget_step(&v, &[0.5, 0.5], &model, &RetargetConfig::with_alpha(-1.0)).is_err());
        assert!(retarget_step(&v, &[0.5, 0.5], &model, &cfg.clone().with_beta(-0.1)).is_err());
    }

    #[test]
    fn stream_of_constant_frames_is_constant_after_first() {
        let model = HandModel::from_toml_str(FIVE_FINGER).unwrap();
        let frames: Vec<HandFrame> = (0..10).map(|i| synthetic_hand(i as f64 * 0.03, [0.4, 0.6, 0.3, 0.5, 0.2])).collect();
        let cfg = RetargetConfig::with_alpha(1.0).with_beta(0.0);
        let out = retarget_stream(&frames, &model, &cfg).unwrap();
        assert_eq!(out.len(), 10);
        for w in out[1..].windows(2) {
            assert!(w[0].distance(&w[1]) < 1e-6);
        }
    }

    #[test]
    fn empty_stream() {
        let out = retarget_stream(&[], &planar(), &RetargetConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn gripper_calibration_points() {
        let calib = GripperCalibration::default();
        let at = |d: f64| {
            gripper_aperture(
                &frame_with(&[(THUMB_TIP, Vec3::new(0.01, 0.05, 0.0)), (INDEX_TIP, Vec3::new(0.01 + d, 0.05, 0.0))]),
                &calib,
            )
        };
        assert_eq!(at(0.02), 0.0);
        assert_eq!(at(0.12), 1.0);
        assert_abs_diff_eq!(at(0.07), 0.5, epsilon = 1e-12);
        assert_eq!(at(0.0), 0.0);
        assert_eq!(at(0.5), 1.0);
    }

    #[test]
    fn default_alpha_is_hand_length_ratio() {
        let model = HandModel::from_toml_str(FIVE_FINGER).unwrap();
        let human = synthetic_hand(0.0, [0.0; 5]);
        let alpha = model.default_alpha(&human);
        let span = 0.01f64.hypot(0.09) + 0.055 + 0.05;
        assert_abs_diff_eq!(alpha, span / 0.192f64.hypot(0.01), epsilon = 1e-12);
    }
}
