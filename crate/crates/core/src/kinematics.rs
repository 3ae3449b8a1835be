//! Serial revolute chains: forward kinematics, the geometric Jacobian and a
//! damped-least-squares inverse kinematics solver with joint limits.
//!
//! Chains are data. They load from a TOML document:
//!
//! ```toml
//! name = "arm6"
//!
//! [[joints]]
//! name = "base_yaw"
//! translation = [0.0, 0.0, 0.15]   # parent offset, meters
//! rpy = [0.0, 0.0, 0.0]            # parent rotation, radians
//! axis = [0.0, 0.0, 1.0]
//! limits = [-3.0, 3.0]
//!
//! [tool]
//! translation = [0.05, 0.0, 0.0]
//! rpy = [0.0, 0.0, 0.0]
//!
//! [workspace]                       # optional
//! center = [0.4, 0.0, 0.3]
//! radius = 0.3
//! ```

use std::path::Path;

use nalgebra::{Cholesky, DVector, Dyn, Matrix6, OMatrix, Unit, Vector6, U3, U6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{compose, rotation_vector, Pose6D, Quat, Sphere, Transform, Vec3};

/// Number of joints on the exoskeleton arm (seven links, six joints).
pub const EXOSKELETON_DOF: usize = 6;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("joint vector has {got} values but chain `{chain}` has {expected} joints")]
    LengthMismatch {
        chain: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid chain `{chain}`: {reason}")]
    InvalidChain { chain: String, reason: String },
    #[error("failed to parse chain document: {0}")]
    Parse(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    /// Fixed offset from the previous joint frame.
    pub origin: Transform,
    pub axis: Unit<Vec3>,
    pub lower: f64,
    pub upper: f64,
}

impl Joint {
    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    name: String,
    joints: Vec<Joint>,
    tool: Transform,
    workspace: Option<Sphere>,
}

/// One joint-angle sample, radians.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &JointVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl std::ops::Deref for JointVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<Joint>,
        tool: Transform,
        workspace: Option<Sphere>,
    ) -> Result<Self, KinematicsError> {
        let name = name.into();
        for j in &joints {
            if !(j.lower < j.upper) {
                return Err(KinematicsError::InvalidChain {
                    chain: name,
                    reason: format!(
                        "joint `{}` has lower limit {} not below upper limit {}",
                        j.name, j.lower, j.upper
                    ),
                });
            }
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(KinematicsError::InvalidChain {
                    chain: name,
                    reason: format!("joint `{}` axis is not unit length", j.name),
                });
            }
        }
        Ok(Self {
            name,
            joints,
            tool,
            workspace,
        })
    }

    pub fn from_toml_str(doc: &str) -> Result<Self, KinematicsError> {
        let parsed: ChainDoc =
            toml::from_str(doc).map_err(|e| KinematicsError::Parse(e.to_string()))?;
        parsed.into_chain()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KinematicsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| KinematicsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn tool(&self) -> &Transform {
        &self.tool
    }

    pub fn workspace(&self) -> Option<&Sphere> {
        self.workspace.as_ref()
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.lower).collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.upper).collect()
    }

    /// Mid-range configuration.
    pub fn neutral(&self) -> JointVector {
        JointVector(self.joints.iter().map(Joint::midpoint).collect())
    }

    /// Upper bound on the distance from the base to the tool point.
    pub fn reach(&self) -> f64 {
        self.joints
            .iter()
            .map(|j| j.origin.translation.norm())
            .sum::<f64>()
            + self.tool.translation.norm()
    }

    pub fn check_len(&self, q: &[f64]) -> Result<(), KinematicsError> {
        if q.len() != self.joints.len() {
            return Err(KinematicsError::LengthMismatch {
                chain: self.name.clone(),
                expected: self.joints.len(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// The exoskeleton contract: exactly six joints.
    pub fn require_exoskeleton(&self) -> Result<(), KinematicsError> {
        if self.dof() != EXOSKELETON_DOF {
            return Err(KinematicsError::InvalidChain {
                chain: self.name.clone(),
                reason: format!(
                    "exoskeleton chains have {EXOSKELETON_DOF} joints, found {}",
                    self.dof()
                ),
            });
        }
        Ok(())
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = j.clamp(*v);
        }
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.joints)
            .all(|(v, j)| *v >= j.lower && *v <= j.upper)
    }

    fn fk_unchecked(&self, q: &[f64]) -> Transform {
        let mut t = Transform::identity();
        for (j, &angle) in self.joints.iter().zip(q) {
            t = compose(&t, &j.origin);
            t = compose(
                &t,
                &Transform::from_rotation(Quat::from_axis_angle(&j.axis, angle)),
            );
        }
        compose(&t, &self.tool)
    }

    /// World-frame joint axes and joint origins, plus the tool pose.
    fn joint_frames(&self, q: &[f64], axes: &mut Vec<Vec3>, origins: &mut Vec<Vec3>) -> Transform {
        axes.clear();
        origins.clear();
        let mut t = Transform::identity();
        for (j, &angle) in self.joints.iter().zip(q) {
            t = compose(&t, &j.origin);
            axes.push(t.rotation * j.axis.into_inner());
            origins.push(t.translation);
            t = compose(
                &t,
                &Transform::from_rotation(Quat::from_axis_angle(&j.axis, angle)),
            );
        }
        compose(&t, &self.tool)
    }

    /// 6×n geometric Jacobian in the base frame; rows are (linear, angular).
    pub fn jacobian(&self, q: &[f64]) -> Result<OMatrix<f64, U6, Dyn>, KinematicsError> {
        self.check_len(q)?;
        let mut axes = Vec::with_capacity(self.dof());
        let mut origins = Vec::with_capacity(self.dof());
        let ee = self.joint_frames(q, &mut axes, &mut origins);
        Ok(self.assemble_jacobian(&ee, &axes, &origins))
    }

    /// 3×n position Jacobian of the tool point.
    pub fn position_jacobian(
        &self,
        q: &[f64],
    ) -> Result<(Vec3, OMatrix<f64, U3, Dyn>), KinematicsError> {
        self.check_len(q)?;
        let mut axes = Vec::with_capacity(self.dof());
        let mut origins = Vec::with_capacity(self.dof());
        let ee = self.joint_frames(q, &mut axes, &mut origins);
        let mut jac = OMatrix::<f64, U3, Dyn>::zeros(self.dof());
        for (i, (a, o)) in axes.iter().zip(&origins).enumerate() {
            jac.set_column(i, &a.cross(&(ee.translation - o)));
        }
        Ok((ee.translation, jac))
    }

    fn assemble_jacobian(
        &self,
        ee: &Transform,
        axes: &[Vec3],
        origins: &[Vec3],
    ) -> OMatrix<f64, U6, Dyn> {
        let mut jac = OMatrix::<f64, U6, Dyn>::zeros(self.dof());
        for (i, (a, o)) in axes.iter().zip(origins).enumerate() {
            let lin = a.cross(&(ee.translation - o));
            jac.set_column(i, &Vector6::new(lin.x, lin.y, lin.z, a.x, a.y, a.z));
        }
        jac
    }
}

/// Tool pose for joint angles `q`.
pub fn forward_kinematics(chain: &KinematicChain, q: &[f64]) -> Result<Pose6D, KinematicsError> {
    chain.check_len(q)?;
    Ok(chain.fk_unchecked(q).into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    pub max_iters: usize,
    /// Upper bound on the DLS damping factor.
    pub damping: f64,
    /// Largest joint change allowed per iteration, radians.
    pub max_step: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-3,
            max_iters: 100,
            damping: 0.05,
            max_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: JointVector,
    pub converged: bool,
    pub iterations: usize,
    pub position_error: f64,
    pub orientation_error: f64,
}

/// 6D pose error twist: (target − current position, rotation vector of
/// `target ∘ current⁻¹`).
pub fn pose_error(target: &Pose6D, current: &Pose6D) -> Vector6<f64> {
    let dp = target.position - current.position;
    let dr = rotation_vector(&(target.orientation * current.orientation.inverse()));
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Damped least squares with per-iteration step limiting and projection onto
/// the joint limits. Returns the best iterate with `converged = false` when
/// the tolerance is not met within `max_iters`.
pub fn inverse_kinematics(
    chain: &KinematicChain,
    target: &Pose6D,
    seed: &[f64],
    opts: &IkOptions,
) -> Result<IkSolution, KinematicsError> {
    chain.check_len(seed)?;
    let n = chain.dof();
    let mut q = seed.to_vec();
    chain.clamp(&mut q);

    let mut axes = Vec::with_capacity(n);
    let mut origins = Vec::with_capacity(n);

    let mut best: Option<(f64, Vec<f64>, f64, f64)> = None;
    let mut iterations = 0;

    'solve: loop {
        let ee: Pose6D = chain.joint_frames(&q, &mut axes, &mut origins).into();
        let err = pose_error(target, &ee);
        let pos_err = err.fixed_rows::<3>(0).norm();
        let rot_err = err.fixed_rows::<3>(3).norm();
        let residual = err.norm();

        if best.as_ref().is_none_or(|b| residual < b.0) {
            best = Some((residual, q.clone(), pos_err, rot_err));
        }
        if pos_err < opts.position_tolerance && rot_err < opts.orientation_tolerance {
            return Ok(IkSolution {
                q: JointVector(q),
                converged: true,
                iterations,
                position_error: pos_err,
                orientation_error: rot_err,
            });
        }
        if iterations >= opts.max_iters {
            break;
        }
        iterations += 1;

        // Damping is capped at `opts.damping` and shrinks with the residual, so
        // near-singular but reachable targets still converge quadratically.
        let lambda = opts.damping.min(residual).max(1e-9);
        let mut jac = chain.assemble_jacobian(&ee.to_transform(), &axes, &origins);
        // Joints held at a limit by the step are frozen and the step is
        // re-solved with the rest.
        let mut dq: DVector<f64>;
        loop {
            let jjt: Matrix6<f64> = &jac * jac.transpose() + Matrix6::identity() * (lambda * lambda);
            let Some(chol) = Cholesky::new(jjt) else {
                break 'solve;
            };
            dq = jac.transpose() * chol.solve(&err);
            let mut frozen = false;
            for (k, j) in chain.joints().iter().enumerate() {
                let pushing_out = (q[k] <= j.lower && dq[k] < 0.0) || (q[k] >= j.upper && dq[k] > 0.0);
                if pushing_out && jac.column(k).iter().any(|v| *v != 0.0) {
                    jac.column_mut(k).fill(0.0);
                    frozen = true;
                }
            }
            if !frozen {
                break;
            }
        }
        let largest = dq.amax();
        if largest > opts.max_step {
            dq *= opts.max_step / largest;
        }
        for (v, d) in q.iter_mut().zip(dq.iter()) {
            *v += d;
        }
        chain.clamp(&mut q);
    }

    let (_, q, position_error, orientation_error) = best.expect("at least one iterate evaluated");
    Ok(IkSolution {
        q: JointVector(q),
        converged: false,
        iterations,
        position_error,
        orientation_error,
    })
}

/// IK solver that carries the previous solution as its warm start.
#[derive(Debug, Clone)]
pub struct WarmStartIk {
    chain: KinematicChain,
    opts: IkOptions,
    seed: JointVector,
}

impl WarmStartIk {
    pub fn new(chain: KinematicChain, opts: IkOptions) -> Self {
        let seed = chain.neutral();
        Self { chain, opts, seed }
    }

    pub fn with_seed(mut self, seed: JointVector) -> Result<Self, KinematicsError> {
        self.chain.check_len(&seed)?;
        self.seed = seed;
        Ok(self)
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn seed(&self) -> &JointVector {
        &self.seed
    }

    /// Solves from the last converged solution. A non-converged result does
    /// not move the warm start.
    pub fn solve(&mut self, target: &Pose6D) -> IkSolution {
        let sol = inverse_kinematics(&self.chain, target, &self.seed, &self.opts)
            .expect("seed length matches chain by construction");
        if sol.converged {
            self.seed = sol.q.clone();
        }
        sol
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ChainDoc {
    pub name: String,
    pub joints: Vec<JointDoc>,
    #[serde(default)]
    pub tool: Option<FrameDoc>,
    #[serde(default)]
    pub workspace: Option<Sphere>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct JointDoc {
    pub name: String,
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
    pub axis: [f64; 3],
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub(crate) struct FrameDoc {
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl FrameDoc {
    fn to_transform(&self) -> Transform {
        Transform::from_rpy_translation(self.rpy, Vec3::from(self.translation))
    }
}

impl ChainDoc {
    pub(crate) fn into_chain(self) -> Result<KinematicChain, KinematicsError> {
        let joints = self
            .joints
            .iter()
            .map(|j| {
                let axis = Vec3::from(j.axis);
                if (axis.norm() - 1.0).abs() > 1e-9 {
                    return Err(KinematicsError::InvalidChain {
                        chain: self.name.clone(),
                        reason: format!("joint `{}` axis {:?} is not unit length", j.name, j.axis),
                    });
                }
                Ok(Joint {
                    name: j.name.clone(),
                    origin: Transform::from_rpy_translation(j.rpy, Vec3::from(j.translation)),
                    axis: Unit::new_unchecked(axis),
                    lower: j.limits[0],
                    upper: j.limits[1],
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let tool = self.tool.unwrap_or_default().to_transform();
        KinematicChain::new(self.name, joints, tool, self.workspace)
    }
}
