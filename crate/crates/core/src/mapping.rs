//! Operator→robot end-effector mapping.
//!
//! Positions follow `x_e = γ (x_h − c_h) + c_t` (mirror mode negates the
//! scaled displacement), then a radial clamp onto the robot workspace ball.
//! Calibration is a streaming min/max fold over recorded wrist poses.
//!
//! Rotation mapping centers each human angle on the midpoint of its
//! calibrated span and scales by `task_range / (max − min)`, so the full
//! calibrated span lands on `[−task_range/2, +task_range/2]`. For reference,
//! the originally published form of this step reads
//! `scale = (max − min) / task_range`, `offset = −scale · (max − min) / 2`,
//! `mapped = human · scale + offset`; that form does not send the midpoint
//! to zero and is not used here.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rpy_to_quat, GeometryError, Pose6D, Quat, Sphere, Vec3};

/// Smallest usable extent of a calibration sweep along any axis, meters.
pub const MIN_CALIBRATION_EXTENT: f64 = 0.01;

const AXES: [char; 3] = ['x', 'y', 'z'];
const ANGLES: [&str; 3] = ["roll", "pitch", "yaw"];

#[derive(Debug, Error)]
pub enum MappingError {
    #[error("calibration stream is empty")]
    EmptyStream,
    #[error("calibration sweep too small along {axis}: extent {extent} m < {MIN_CALIBRATION_EXTENT} m")]
    CalibrationTooSmall { axis: char, extent: f64 },
    #[error("calibration has zero angular extent on {axis}")]
    DegenerateAxis { axis: &'static str },
    #[error("control scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("calibration document is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("failed to parse calibration: {0}")]
    Parse(String),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Recorded human motion extremes plus the derived center and radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceCalibration {
    pub max_x: f64,
    pub max_y: f64,
    pub max_z: f64,
    pub min_x: f64,
    pub min_y: f64,
    pub min_z: f64,
    pub max_roll: f64,
    pub min_roll: f64,
    pub max_pitch: f64,
    pub min_pitch: f64,
    pub max_yaw: f64,
    pub min_yaw: f64,
    pub human_center: [f64; 3],
    pub human_radius: f64,
}

impl WorkspaceCalibration {
    /// Builds a calibration from explicit extremes, deriving center and radius.
    pub fn from_extremes(
        min: [f64; 3],
        max: [f64; 3],
        min_rpy: [f64; 3],
        max_rpy: [f64; 3],
    ) -> Result<Self, MappingError> {
        for i in 0..3 {
            let extent = max[i] - min[i];
            if !(extent >= MIN_CALIBRATION_EXTENT) {
                return Err(MappingError::CalibrationTooSmall {
                    axis: AXES[i],
                    extent,
                });
            }
            if !(max_rpy[i] >= min_rpy[i]) {
                return Err(MappingError::Inconsistent(format!(
                    "max_{} < min_{}",
                    ANGLES[i], ANGLES[i]
                )));
            }
        }
        let center = [
            (max[0] + min[0]) / 2.0,
            (max[1] + min[1]) / 2.0,
            (max[2] + min[2]) / 2.0,
        ];
        let radius = (max[0] - center[0])
            .min(max[1] - center[1])
            .min(max[2] - center[2]);
        Ok(Self {
            max_x: max[0],
            max_y: max[1],
            max_z: max[2],
            min_x: min[0],
            min_y: min[1],
            min_z: min[2],
            max_roll: max_rpy[0],
            min_roll: min_rpy[0],
            max_pitch: max_rpy[1],
            min_pitch: min_rpy[1],
            max_yaw: max_rpy[2],
            min_yaw: min_rpy[2],
            human_center: center,
            human_radius: radius,
        })
    }

    pub fn human_center(&self) -> Vec3 {
        Vec3::from(self.human_center)
    }

    pub fn human_radius(&self) -> f64 {
        self.human_radius
    }

    pub fn min_position(&self) -> [f64; 3] {
        [self.min_x, self.min_y, self.min_z]
    }

    pub fn max_position(&self) -> [f64; 3] {
        [self.max_x, self.max_y, self.max_z]
    }

    pub fn min_rpy(&self) -> [f64; 3] {
        [self.min_roll, self.min_pitch, self.min_yaw]
    }

    pub fn max_rpy(&self) -> [f64; 3] {
        [self.max_roll, self.max_pitch, self.max_yaw]
    }

    /// Rebuilds from the stored extremes and checks the stored derived values.
    pub fn validated(self) -> Result<Self, MappingError> {
        let rebuilt = Self::from_extremes(
            self.min_position(),
            self.max_position(),
            self.min_rpy(),
            self.max_rpy(),
        )?;
        if rebuilt != self {
            return Err(MappingError::Inconsistent(
                "human_center/human_radius do not match the stored extremes".into(),
            ));
        }
        Ok(rebuilt)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration serializes")
    }

    pub fn from_toml_str(doc: &str) -> Result<Self, MappingError> {
        let c: Self = toml::from_str(doc).map_err(|e| MappingError::Parse(e.to_string()))?;
        c.validated()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MappingError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MappingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

/// Running min/max over a pose stream.
#[derive(Debug, Clone, Default)]
pub struct CalibrationBuilder {
    bounds: Option<([f64; 3], [f64; 3], [f64; 3], [f64; 3])>,
    samples: usize,
}

impl CalibrationBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pose: &Pose6D) {
        let p: [f64; 3] = pose.position.into();
        let a = pose.rpy().as_array();
        self.samples += 1;
        match &mut self.bounds {
            None => self.bounds = Some((p, p, a, a)),
            Some((min, max, amin, amax)) => {
                for i in 0..3 {
                    min[i] = min[i].min(p[i]);
                    max[i] = max[i].max(p[i]);
                    amin[i] = amin[i].min(a[i]);
                    amax[i] = amax[i].max(a[i]);
                }
            }
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn finish(&self) -> Result<WorkspaceCalibration, MappingError> {
        let (min, max, amin, amax) = self.bounds.ok_or(MappingError::EmptyStream)?;
        WorkspaceCalibration::from_extremes(min, max, amin, amax)
    }
}

pub fn calibrate<'a>(
    poses: impl IntoIterator<Item = &'a Pose6D>,
) -> Result<WorkspaceCalibration, MappingError> {
    let mut b = CalibrationBuilder::new();
    for p in poses {
        b.push(p);
    }
    b.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MappingMode {
    #[default]
    Normal,
    Mirror,
}

impl MappingMode {
    fn sign(self) -> f64 {
        match self {
            MappingMode::Normal => 1.0,
            MappingMode::Mirror => -1.0,
        }
    }
}

/// Per-axis target spans for the rotation mapping, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationRanges {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl RotationRanges {
    pub fn as_array(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingParams {
    pub gamma: f64,
    pub human_center: Vec3,
    pub target_center: Vec3,
    pub robot_workspace: Sphere,
    pub mode: MappingMode,
    /// Set when the scaled human workspace does not fit inside the robot
    /// workspace; mapped poses near its edge rely on the safety clamp.
    pub exceeds_workspace: bool,
}

/// Output of [`map_position`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPosition {
    pub position: Vec3,
    pub clamped: bool,
}

impl MappingParams {
    pub fn new(
        gamma: f64,
        human_center: Vec3,
        target_center: Vec3,
        robot_workspace: Sphere,
    ) -> Result<Self, MappingError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(MappingError::InvalidScale(gamma));
        }
        Ok(Self {
            gamma,
            human_center,
            target_center,
            robot_workspace,
            mode: MappingMode::Normal,
            exceeds_workspace: false,
        })
    }

    pub fn with_mode(mut self, mode: MappingMode) -> Self {
        self.mode = mode;
        self
    }

    /// `c_t − γ·c_h`: the additive term of the affine form `γ·x_h + offset`.
    pub fn offset(&self) -> Vec3 {
        self.target_center - self.gamma * self.human_center
    }

    /// Position map (or its mirror) without the safety clamp.
    pub fn map_unclamped(&self, human: &Vec3) -> Vec3 {
        self.mode.sign() * self.gamma * (human - self.human_center) + self.target_center
    }

    /// Exact inverse of [`MappingParams::map_unclamped`].
    pub fn preimage(&self, robot: &Vec3) -> Vec3 {
        self.mode.sign() * (robot - self.target_center) / self.gamma + self.human_center
    }
}

/// Algorithm-1 style workspace mapping: the calibrated human ball is scaled
/// onto the robot workspace ball.
pub fn derive_workspace_mapping(
    calib: &WorkspaceCalibration,
    robot_ws: &Sphere,
) -> Result<MappingParams, MappingError> {
    let gamma = robot_ws.radius() / calib.human_radius();
    MappingParams::new(gamma, calib.human_center(), robot_ws.center(), *robot_ws)
}

/// Task mapping: a fixed control scale about a chosen task center.
pub fn derive_task_mapping(
    calib: &WorkspaceCalibration,
    task_center: Vec3,
    task_control_scale: f64,
    robot_ws: &Sphere,
) -> Result<MappingParams, MappingError> {
    let mut params = MappingParams::new(
        task_control_scale,
        calib.human_center(),
        task_center,
        *robot_ws,
    )?;
    let task_radius = task_control_scale * calib.human_radius();
    params.exceeds_workspace =
        (task_center - robot_ws.center()).norm() + task_radius > robot_ws.radius();
    Ok(params)
}

/// Radial projection onto the closed workspace ball.
pub fn clamp_to_workspace(p: &Vec3, ws: &Sphere) -> Vec3 {
    let d = p - ws.center();
    let dist = d.norm();
    if dist <= ws.radius() {
        *p
    } else {
        ws.center() + d * (ws.radius() / dist)
    }
}

pub fn map_position(human: &Pose6D, params: &MappingParams) -> MappedPosition {
    let raw = params.map_unclamped(&human.position);
    let position = clamp_to_workspace(&raw, &params.robot_workspace);
    MappedPosition {
        position,
        clamped: position != raw,
    }
}

/// Per-axis affine rotation mapping; see the module docs.
pub fn map_rotation(
    human_rpy: [f64; 3],
    calib: &WorkspaceCalibration,
    task_ranges: &RotationRanges,
) -> Result<[f64; 3], MappingError> {
    let (min, max) = (calib.min_rpy(), calib.max_rpy());
    let ranges = task_ranges.as_array();
    let mut out = [0.0; 3];
    for i in 0..3 {
        let span = max[i] - min[i];
        if !(span > 0.0) {
            return Err(MappingError::DegenerateAxis { axis: ANGLES[i] });
        }
        let scale = ranges[i] / span;
        let midpoint = (max[i] + min[i]) / 2.0;
        out[i] = scale * (human_rpy[i] - midpoint);
    }
    Ok(out)
}

/// Maps a wrist orientation to a robot orientation: the mapped roll/pitch/yaw
/// are applied on top of `home`.
pub fn map_orientation(
    human: &Quat,
    calib: &WorkspaceCalibration,
    task_ranges: &RotationRanges,
    home: &Quat,
) -> Result<Quat, MappingError> {
    let rpy = crate::geometry::quat_to_rpy(human).as_array();
    let [r, p, y] = map_rotation(rpy, calib, task_ranges)?;
    Ok(home * rpy_to_quat(r, p, y))
}

/// Closest simultaneous approach of the two human wrists seen during
/// calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BimanualContact {
    pub left_wrist: [f64; 3],
    pub right_wrist: [f64; 3],
}

impl BimanualContact {
    pub fn new(left_wrist: Vec3, right_wrist: Vec3) -> Self {
        Self {
            left_wrist: left_wrist.into(),
            right_wrist: right_wrist.into(),
        }
    }

    /// Picks the pair with the smallest separation (first one on ties).
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Vec3, Vec3)>) -> Option<Self> {
        let mut best: Option<(f64, Vec3, Vec3)> = None;
        for (l, r) in pairs {
            let d = (r - l).norm();
            if best.is_none_or(|b| d < b.0) {
                best = Some((d, l, r));
            }
        }
        best.map(|(_, l, r)| Self::new(l, r))
    }

    pub fn separation(&self) -> f64 {
        (Vec3::from(self.right_wrist) - Vec3::from(self.left_wrist)).norm()
    }
}

/// Aligns a left/right mapping pair so that wrists held at the calibrated
/// closest approach widened by `contact_gap` map to the same robot point.
///
/// Both outputs take the smaller γ; the two task centers move symmetrically,
/// so their midpoint is preserved.
pub fn derive_bimanual_pair(
    left: &MappingParams,
    right: &MappingParams,
    contact: &BimanualContact,
    contact_gap: f64,
) -> (MappingParams, MappingParams) {
    let gamma = left.gamma.min(right.gamma);
    let (pl, pr) = (Vec3::from(contact.left_wrist), Vec3::from(contact.right_wrist));
    let sep = pr - pl;
    let dir = if sep.norm() > 0.0 {
        sep / sep.norm()
    } else {
        Vec3::zeros()
    };
    let pl = pl - dir * (contact_gap / 2.0);
    let pr = pr + dir * (contact_gap / 2.0);

    let mut l = *left;
    let mut r = *right;
    l.gamma = gamma;
    r.gamma = gamma;
    let ml = l.map_unclamped(&pl);
    let mr = r.map_unclamped(&pr);
    let half = (mr - ml) / 2.0;
    l.target_center += half;
    r.target_center -= half;
    (l, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_sweep(center: Vec3, half: Vec3) -> Vec<Pose6D> {
        let mut v = Vec::new();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    v.push(Pose6D::from_position(
                        center + Vec3::new(sx * half.x, sy * half.y, sz * half.z),
                    ));
                }
            }
        }
        v
    }

    fn ball(center: Vec3, r: f64) -> Sphere {
        Sphere::new(center, r).unwrap()
    }

    fn calib_with_radius(center: Vec3, r: f64) -> WorkspaceCalibration {
        calibrate(&cube_sweep(center, Vec3::repeat(r))).unwrap()
    }

    #[test]
    fn repeated_single_pose_is_degenerate() {
        let p = Pose6D::from_position(Vec3::new(0.1, 0.2, 0.3));
        let err = calibrate(&vec![p; 50]).unwrap_err();
        assert!(matches!(err, MappingError::CalibrationTooSmall { axis: 'x', .. }));
        assert!(matches!(calibrate(&[]), Err(MappingError::EmptyStream)));
    }

    #[test]
    fn thin_axis_is_named() {
        let sweep = cube_sweep(Vec3::zeros(), Vec3::new(0.2, 0.2, 0.004));
        let err = calibrate(&sweep).unwrap_err();
        assert!(matches!(err, MappingError::CalibrationTooSmall { axis: 'z', .. }));
    }

    #[test]
    fn symmetric_cube_sweep() {
        let c = calibrate(&cube_sweep(Vec3::zeros(), Vec3::repeat(0.2))).unwrap();
        assert_eq!(c.human_center(), Vec3::zeros());
        assert_eq!(c.human_radius(), 0.2);
    }

    #[test]
    fn radius_is_smallest_half_extent() {
        // extents (0.4, 0.3, 0.5) about (0.1, 0, 0.2): half-extents 0.2, 0.15, 0.25
        let sweep = cube_sweep(Vec3::new(0.1, 0.0, 0.2), Vec3::new(0.2, 0.15, 0.25));
        let c = calibrate(&sweep).unwrap();
        assert_abs_diff_eq!(c.human_center(), Vec3::new(0.1, 0.0, 0.2), epsilon = 1e-15);
        assert_abs_diff_eq!(c.human_radius(), 0.15, epsilon = 1e-15);
    }

    #[test]
    fn calibration_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut poses: Vec<Pose6D> = (0..500)
            .map(|_| {
                Pose6D::from_rpy(
                    Vec3::new(
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                    ),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let reference = calibrate(&poses).unwrap();
        for _ in 0..20 {
            poses.shuffle(&mut rng);
            assert_eq!(calibrate(&poses).unwrap(), reference);
        }
    }

    #[test]
    fn calibration_document_round_trip() {
        let c = calib_with_radius(Vec3::new(0.3, -0.1, 0.2), 0.18);
        let doc = c.to_toml();
        assert_eq!(WorkspaceCalibration::from_toml_str(&doc).unwrap(), c);
        let tampered = doc.replace("human_radius = 0.18", "human_radius = 0.5");
        assert!(WorkspaceCalibration::from_toml_str(&tampered).is_err());
    }

    #[test]
    fn identity_workspace_mapping() {
        let calib = calib_with_radius(Vec3::zeros(), 0.2);
        let p = derive_workspace_mapping(&calib, &ball(Vec3::zeros(), 0.2)).unwrap();
        assert_eq!(p.gamma, 1.0);
        assert_eq!(p.offset(), Vec3::zeros());
    }

    #[test]
    fn workspace_scale_is_radius_ratio() {
        let calib = calib_with_radius(Vec3::new(0.2, 0.1, 0.0), 0.2);
        let p = derive_workspace_mapping(&calib, &ball(Vec3::new(0.5, 0.0, 0.3), 0.05)).unwrap();
        assert_eq!(p.gamma, 0.25);
        assert_eq!(p.gamma, 0.05 / calib.human_radius());
        assert_eq!(p.target_center, Vec3::new(0.5, 0.0, 0.3));
        assert_abs_diff_eq!(
            p.offset(),
            Vec3::new(0.5, 0.0, 0.3) - 0.25 * Vec3::new(0.2, 0.1, 0.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn task_mapping_uses_configured_scale() {
        let calib = calib_with_radius(Vec3::zeros(), 0.2);
        for scale in [0.5, 1.0, 2.5, 6.0] {
            let p = derive_task_mapping(&calib, Vec3::zeros(), scale, &ball(Vec3::zeros(), 0.6))
                .unwrap();
            assert_eq!(p.gamma, scale);
        }
        assert!(matches!(
            derive_task_mapping(&calib, Vec3::zeros(), 0.0, &ball(Vec3::zeros(), 0.6)),
            Err(MappingError::InvalidScale(_))
        ));
    }

    #[test]
    fn task_mapping_offset() {
        let calib = calibrate(&cube_sweep(Vec3::new(0.1, 0.0, 0.0), Vec3::repeat(0.1))).unwrap();
        let p = derive_task_mapping(&calib, Vec3::new(0.5, 0.0, 0.3), 1.0, &ball(Vec3::zeros(), 2.0))
            .unwrap();
        assert_abs_diff_eq!(p.offset(), Vec3::new(0.4, 0.0, 0.3), epsilon = 1e-15);
        assert!(!p.exceeds_workspace);
    }

    #[test]
    fn task_mapping_reduces_to_workspace_mapping() {
        let calib = calib_with_radius(Vec3::new(0.3, 0.2, 0.1), 0.2);
        let ws = ball(Vec3::new(0.4, 0.0, 0.3), 0.3);
        let a = derive_workspace_mapping(&calib, &ws).unwrap();
        let b = derive_task_mapping(&calib, ws.center(), ws.radius() / calib.human_radius(), &ws)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_task_is_flagged() {
        // Medium & Medium: scale 2.5 on a 0.2 m human radius needs 0.5 m,
        // but the workspace is 0.25 m.
        let calib = calib_with_radius(Vec3::zeros(), 0.2);
        let p = derive_task_mapping(&calib, Vec3::zeros(), 2.5, &ball(Vec3::zeros(), 0.25)).unwrap();
        assert!(p.exceeds_workspace);
    }

    #[test]
    fn center_maps_to_center_in_both_modes() {
        let calib = calib_with_radius(Vec3::new(0.1, 0.2, 0.3), 0.2);
        for mode in [MappingMode::Normal, MappingMode::Mirror] {
            let p = derive_task_mapping(&calib, Vec3::new(1.0, 0.0, 0.5), 0.7, &ball(Vec3::new(1.0, 0.0, 0.5), 0.5))
                .unwrap()
                .with_mode(mode);
            let m = map_position(&Pose6D::from_position(calib.human_center()), &p);
            assert_eq!(m.position, Vec3::new(1.0, 0.0, 0.5));
            assert!(!m.clamped);
        }
    }

    #[test]
    fn normal_mode_half_scale() {
        let ct = Vec3::new(0.4, 0.1, 0.2);
        let p = MappingParams::new(0.5, Vec3::zeros(), ct, ball(ct, 1.0)).unwrap();
        let m = map_position(&Pose6D::from_position(Vec3::new(0.10, 0.0, 0.0)), &p);
        assert_abs_diff_eq!(m.position, ct + Vec3::new(0.05, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn mirror_mode_flips_displacement() {
        let ct = Vec3::new(0.4, 0.1, 0.2);
        let p = MappingParams::new(1.0, Vec3::zeros(), ct, ball(ct, 1.0))
            .unwrap()
            .with_mode(MappingMode::Mirror);
        let m = map_position(&Pose6D::from_position(Vec3::new(0.1, -0.2, 0.05)), &p);
        assert_abs_diff_eq!(m.position, ct + Vec3::new(-0.1, 0.2, -0.05), epsilon = 1e-15);
    }

    #[test]
    fn clamp_cases() {
        let ws = ball(Vec3::new(1.0, 2.0, 3.0), 0.5);
        let inside = Vec3::new(1.1, 2.1, 3.1);
        assert_eq!(clamp_to_workspace(&inside, &ws), inside);
        let far = ws.center() + Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(clamp_to_workspace(&far, &ws), ws.center() + Vec3::new(0.5, 0.0, 0.0));
        let boundary = ws.center() + Vec3::new(0.0, 0.0, -0.5);
        assert_eq!(clamp_to_workspace(&boundary, &ws), boundary);
    }

    #[test]
    fn clamped_outputs_are_flagged() {
        let p = MappingParams::new(1.0, Vec3::zeros(), Vec3::zeros(), ball(Vec3::zeros(), 0.1)).unwrap();
        let m = map_position(&Pose6D::from_position(Vec3::new(0.3, 0.0, 0.0)), &p);
        assert!(m.clamped);
        assert_abs_diff_eq!(m.position.norm(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn preimage_inverts_the_mapping() {
        let calib = calib_with_radius(Vec3::new(0.3, 0.2, 0.1), 0.2);
        for mode in [MappingMode::Normal, MappingMode::Mirror] {
            let p = derive_task_mapping(&calib, Vec3::new(0.5, -0.3, 0.2), 2.5, &ball(Vec3::zeros(), 5.0))
                .unwrap()
                .with_mode(mode);
            let robot = Vec3::new(0.61, -0.27, 0.33);
            let back = p.map_unclamped(&p.preimage(&robot));
            assert!((back - robot).norm() < 1e-9);
        }
    }

    fn angular_calib(min: [f64; 3], max: [f64; 3]) -> WorkspaceCalibration {
        WorkspaceCalibration::from_extremes([-0.2; 3], [0.2; 3], min, max).unwrap()
    }

    #[test]
    fn rotation_midpoint_maps_to_zero() {
        let calib = angular_calib([-0.4, 0.1, -2.0], [1.0, 0.5, 0.0]);
        let ranges = RotationRanges { roll: 0.3, pitch: 0.2, yaw: 1.0 };
        let out = map_rotation([0.3, 0.3, -1.0], &calib, &ranges).unwrap();
        assert_eq!(out, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn rotation_span_fits_task_range() {
        // scale = 0.5 / 2 = 0.25
        let calib = angular_calib([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]);
        let ranges = RotationRanges { roll: 0.5, pitch: 0.5, yaw: 0.5 };
        let out = map_rotation([1.0, -1.0, 0.5], &calib, &ranges).unwrap();
        assert_abs_diff_eq!(out[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(out[2], 0.125, epsilon = 1e-15);
    }

    #[test]
    fn equal_range_rotation_is_identity_about_midpoint() {
        let calib = angular_calib([0.2; 3], [0.8; 3]);
        let ranges = RotationRanges { roll: 0.6, pitch: 0.6, yaw: 0.6 };
        let out = map_rotation([0.7, 0.2, 0.5], &calib, &ranges).unwrap();
        assert_abs_diff_eq!(out[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], -0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(out[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_angular_extent_is_an_error() {
        let calib = angular_calib([0.0, -1.0, -1.0], [0.0, 1.0, 1.0]);
        let ranges = RotationRanges { roll: 0.5, pitch: 0.5, yaw: 0.5 };
        assert!(matches!(
            map_rotation([0.0; 3], &calib, &ranges),
            Err(MappingError::DegenerateAxis { axis: "roll" })
        ));
    }

    #[test]
    fn mapped_orientation_composes_on_home() {
        let calib = angular_calib([-1.0; 3], [1.0; 3]);
        let ranges = RotationRanges { roll: 2.0, pitch: 2.0, yaw: 2.0 };
        let home = rpy_to_quat(0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let q = map_orientation(&rpy_to_quat(0.0, 0.0, 0.0), &calib, &ranges, &home).unwrap();
        assert!(q.angle_to(&home) < 1e-12);
    }

    fn symmetric_pair(gamma_l: f64, gamma_r: f64) -> (MappingParams, MappingParams, BimanualContact) {
        let ws = ball(Vec3::zeros(), 10.0);
        let left = MappingParams::new(gamma_l, Vec3::new(0.3, 0.25, 0.0), Vec3::new(0.5, 0.3, 0.2), ws).unwrap();
        let right = MappingParams::new(gamma_r, Vec3::new(0.3, -0.25, 0.0), Vec3::new(0.5, -0.3, 0.2), ws).unwrap();
        let contact = BimanualContact::new(Vec3::new(0.3, 0.05, 0.0), Vec3::new(0.3, -0.05, 0.0));
        (left, right, contact)
    }

    #[test]
    fn bimanual_contact_maps_to_one_point() {
        let (l, r, contact) = symmetric_pair(1.0, 1.0);
        let (l2, r2) = derive_bimanual_pair(&l, &r, &contact, 0.0);
        let ml = l2.map_unclamped(&Vec3::from(contact.left_wrist));
        let mr = r2.map_unclamped(&Vec3::from(contact.right_wrist));
        assert!((ml - mr).norm() < 1e-12);
        // the task-center midpoint is preserved
        let mid = (l.target_center + r.target_center) / 2.0;
        let mid2 = (l2.target_center + r2.target_center) / 2.0;
        assert!((mid - mid2).norm() < 1e-12);
    }

    #[test]
    fn bimanual_separation_scales_with_distance_past_contact() {
        let (l, r, contact) = symmetric_pair(1.0, 1.0);
        let s = contact.separation();
        for gap in [0.0, 0.02] {
            let (l2, r2) = derive_bimanual_pair(&l, &r, &contact, gap);
            // Wrists twice as far apart as the closest approach, along the
            // same line: apply both mappings directly.
            let mid = (Vec3::from(contact.left_wrist) + Vec3::from(contact.right_wrist)) / 2.0;
            let dir = (Vec3::from(contact.right_wrist) - Vec3::from(contact.left_wrist)) / s;
            let ml = l2.map_unclamped(&(mid - dir * s));
            let mr = r2.map_unclamped(&(mid + dir * s));
            assert_abs_diff_eq!((mr - ml).norm(), 2.0 * s - (s + gap), epsilon = 1e-12);
        }
    }

    #[test]
    fn bimanual_takes_the_smaller_scale() {
        let (l, r, contact) = symmetric_pair(0.5, 1.0);
        let (l2, r2) = derive_bimanual_pair(&l, &r, &contact, 0.01);
        assert_eq!(l2.gamma, 0.5);
        assert_eq!(r2.gamma, 0.5);
    }

    #[test]
    fn contact_is_the_closest_pair() {
        let pairs = vec![
            (Vec3::new(0.0, 0.3, 0.0), Vec3::new(0.0, -0.3, 0.0)),
            (Vec3::new(0.0, 0.1, 0.0), Vec3::new(0.0, -0.05, 0.0)),
            (Vec3::new(0.0, 0.2, 0.0), Vec3::new(0.0, -0.2, 0.0)),
        ];
        let c = BimanualContact::from_pairs(pairs).unwrap();
        assert_abs_diff_eq!(c.separation(), 0.15, epsilon = 1e-15);
        assert!(BimanualContact::from_pairs(Vec::new()).is_none());
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        proptest::array::uniform3(-1.0f64..1.0).prop_map(Vec3::from)
    }

    proptest! {
        #[test]
        fn position_map_is_linear_about_the_center(
            v in vec3(), a in -5.0f64..5.0, gamma in 0.05f64..8.0, ct in vec3(), ch in vec3(),
            mirror in any::<bool>(),
        ) {
            let mode = if mirror { MappingMode::Mirror } else { MappingMode::Normal };
            let p = MappingParams::new(gamma, ch, ct, ball(ct, 1.0)).unwrap().with_mode(mode);
            let lhs = p.map_unclamped(&(ch + a * v)) - ct;
            let rhs = a * (p.map_unclamped(&(ch + v)) - ct);
            prop_assert!((lhs - rhs).amax() < 1e-9);
        }

        #[test]
        fn mirror_is_point_reflection_through_target_center(
            x in vec3(), gamma in 0.05f64..8.0, ct in vec3(), ch in vec3(),
        ) {
            let n = MappingParams::new(gamma, ch, ct, ball(ct, 1.0)).unwrap();
            let m = n.with_mode(MappingMode::Mirror);
            let sum = n.map_unclamped(&x) + m.map_unclamped(&x);
            prop_assert!((sum - 2.0 * ct).amax() < 1e-9);
        }

        #[test]
        fn mapped_positions_stay_in_workspace(
            x in proptest::array::uniform3(-20.0f64..20.0), gamma in 0.05f64..8.0,
            ct in vec3(), r in 0.01f64..1.0,
        ) {
            let p = MappingParams::new(gamma, Vec3::zeros(), ct, ball(ct, r)).unwrap();
            let m = map_position(&Pose6D::from_position(Vec3::from(x)), &p);
            prop_assert!((m.position - ct).norm() <= r * (1.0 + 1e-12));
        }
    }
}
