//! Rigid-body value types shared by the kinematics, mapping and game modules.
//!
//! Orientation is always carried as a unit quaternion. Roll/pitch/yaw only
//! appear at the rotation-mapping boundary and use the intrinsic Z-Y-X
//! convention: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Pitch magnitude beyond which roll and yaw are no longer separable.
pub const GIMBAL_THRESHOLD: f64 = FRAC_PI_2 - 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("sphere radius must be strictly positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
}

/// Rigid transform: applies `rotation` then `translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Quat::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Quat, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Quat::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Quat) -> Self {
        Self {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    /// Rotation given as intrinsic Z-Y-X roll/pitch/yaw.
    pub fn from_rpy_translation(rpy: [f64; 3], translation: Vec3) -> Self {
        Self::new(rpy_to_quat(rpy[0], rpy[1], rpy[2]), translation)
    }

    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        Self {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }
}

/// `a ∘ b`: the result applies `b` first, then `a`.
pub fn compose(a: &Transform, b: &Transform) -> Transform {
    Transform {
        rotation: renormalize(a.rotation * b.rotation),
        translation: a.rotation * b.translation + a.translation,
    }
}

impl std::ops::Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        compose(&self, &rhs)
    }
}

impl std::ops::Mul<&Transform> for &Transform {
    type Output = Transform;

    fn mul(self, rhs: &Transform) -> Transform {
        compose(self, rhs)
    }
}

fn renormalize(q: Quat) -> Quat {
    Unit::new_normalize(q.into_inner())
}

/// 6D pose: position in meters plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose6D {
    pub position: Vec3,
    pub orientation: Quat,
}

/// Wire/document form: position `[x, y, z]` and orientation `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl From<PoseRepr> for Pose6D {
    fn from(r: PoseRepr) -> Self {
        let [w, x, y, z] = r.orientation;
        let q = Quaternion::new(w, x, y, z);
        let orientation = if q.norm() > 0.0 {
            Unit::new_normalize(q)
        } else {
            Quat::identity()
        };
        Pose6D {
            position: Vec3::from(r.position),
            orientation,
        }
    }
}

impl From<Pose6D> for PoseRepr {
    fn from(p: Pose6D) -> Self {
        let q = p.orientation.quaternion();
        PoseRepr {
            position: p.position.into(),
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl Default for Pose6D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose6D {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: Quat::identity(),
        }
    }

    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self::new(position, Quat::identity())
    }

    pub fn from_rpy(position: Vec3, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(position, rpy_to_quat(roll, pitch, yaw))
    }

    pub fn rpy(&self) -> Rpy {
        quat_to_rpy(&self.orientation)
    }

    pub fn to_transform(&self) -> Transform {
        Transform::new(self.orientation, self.position)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

impl From<Transform> for Pose6D {
    fn from(t: Transform) -> Self {
        Self::new(t.translation, t.rotation)
    }
}

impl From<Pose6D> for Transform {
    fn from(p: Pose6D) -> Self {
        p.to_transform()
    }
}

/// Roll/pitch/yaw triple (radians). `gimbal_locked` is set when the pitch
/// is within 1e-6 of ±π/2; roll is then reported as 0 and the whole twist
/// is assigned to yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rpy {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub gimbal_locked: bool,
}

impl Rpy {
    pub fn as_array(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

/// Builds `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rpy_to_quat(roll: f64, pitch: f64, yaw: f64) -> Quat {
    let (sr, cr) = (roll * 0.5).sin_cos();
    let (sp, cp) = (pitch * 0.5).sin_cos();
    let (sy, cy) = (yaw * 0.5).sin_cos();
    let q = Quaternion::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    );
    Unit::new_normalize(q)
}

pub fn quat_to_rpy(q: &Quat) -> Rpy {
    let Quaternion { coords } = *q.quaternion();
    let (x, y, z, w) = (coords[0], coords[1], coords[2], coords[3]);

    // Rotation matrix entries used below (R = Rz Ry Rx).
    let r20 = 2.0 * (x * z - w * y);
    let r21 = 2.0 * (w * x + y * z);
    let r22 = 1.0 - 2.0 * (x * x + y * y);
    let r10 = 2.0 * (w * z + x * y);
    let r00 = 1.0 - 2.0 * (y * y + z * z);

    let sin_pitch = (-r20).clamp(-1.0, 1.0);
    let cos_pitch = r21.hypot(r22);
    let pitch = sin_pitch.atan2(cos_pitch);

    if pitch.abs() > GIMBAL_THRESHOLD {
        let r01 = 2.0 * (x * y - w * z);
        let r11 = 1.0 - 2.0 * (x * x + z * z);
        return Rpy {
            roll: 0.0,
            pitch,
            yaw: wrap_half_open((-r01).atan2(r11)),
            gimbal_locked: true,
        };
    }

    Rpy {
        roll: wrap_half_open(r21.atan2(r22)),
        pitch,
        yaw: wrap_half_open(r10.atan2(r00)),
        gimbal_locked: false,
    }
}

/// Maps an angle from `[-π, π]` into `(-π, π]`.
fn wrap_half_open(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Wraps any angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Rotation vector (axis * angle, angle in `[0, π]`) of a unit quaternion.
pub fn rotation_vector(q: &Quat) -> Vec3 {
    q.scaled_axis()
}

/// Closed ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SphereRepr", into = "SphereRepr")]
pub struct Sphere {
    center: Vec3,
    radius: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereRepr {
    center: [f64; 3],
    radius: f64,
}

impl TryFrom<SphereRepr> for Sphere {
    type Error = GeometryError;

    fn try_from(r: SphereRepr) -> Result<Self, Self::Error> {
        Sphere::new(Vec3::from(r.center), r.radius)
    }
}

impl From<Sphere> for SphereRepr {
    fn from(s: Sphere) -> Self {
        SphereRepr {
            center: s.center.into(),
            radius: s.radius,
        }
    }
}

impl Sphere {
    pub fn new(center: Vec3, radius: f64) -> Result<Self, GeometryError> {
        if !center.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("sphere center"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn with_center(&self, center: Vec3) -> Self {
        Self {
            center,
            radius: self.radius,
        }
    }

    /// Boundary inclusive.
    pub fn contains(&self, p: &Vec3) -> bool {
        (p - self.center).norm() <= self.radius
    }
}
