use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::geometry::{rpy_to_quat, Sphere, Vec3};
use crate::kinematics::{IkOptions, KinematicChain};
use crate::mapping::{
    derive_task_mapping, derive_workspace_mapping, MappingMode, RotationRanges,
    WorkspaceCalibration,
};
use crate::retargeting::{GripperCalibration, HandModel, RetargetConfig, DEFAULT_BETA};

use super::{ArmSetup, HandSetup, PipelineConfig, SessionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HandMode {
    #[default]
    None,
    Gripper,
    Hand,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandSection {
    #[serde(default)]
    pub mode: HandMode,
    /// Hand model document, required in hand mode.
    pub model: Option<PathBuf>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Fixed α; when absent the model's own α is used, else the hand-size
    /// ratio measured on the first hand frame.
    pub alpha: Option<f64>,
    #[serde(default)]
    pub gripper: GripperCalibration,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

impl Default for HandSection {
    fn default() -> Self {
        Self {
            mode: HandMode::None,
            model: None,
            beta: DEFAULT_BETA,
            alpha: None,
            gripper: GripperCalibration::default(),
        }
    }
}

/// A calibration file path or inline extremes.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CalibrationSource {
    File(PathBuf),
    Inline {
        min: [f64; 3],
        max: [f64; 3],
        min_rpy: [f64; 3],
        max_rpy: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSection {
    pub name: String,
    pub calibration: CalibrationSource,
    /// Task mapping center; workspace mapping when absent.
    pub task_center: Option<[f64; 3]>,
    #[serde(default)]
    pub home_rpy: [f64; 3],
}

/// Live pipeline configuration. Relative paths resolve against the
/// directory holding the document.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub name: String,
    pub exoskeleton: PathBuf,
    pub robot: Option<PathBuf>,
    /// Robot workspace ball; defaults to the robot chain's own.
    pub workspace: Option<WorkspaceSection>,
    #[serde(default)]
    pub mapping_mode: MappingMode,
    /// Task control scale, used by arms with a `task_center`.
    pub control_scale: Option<f64>,
    pub rotation: Option<RotationRanges>,
    #[serde(default)]
    pub hand: HandSection,
    pub arms: Vec<ArmSection>,
    #[serde(skip)]
    base: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceSection {
    pub center: [f64; 3],
    pub radius: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SessionError + '_ {
    move |source| SessionError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl SessionConfig {
    /// Parses a document whose relative paths resolve against `base`.
    pub fn from_toml_str(doc: &str, base: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let mut c: Self = toml::from_str(doc).map_err(|e| SessionError::Config(e.to_string()))?;
        c.base = base.into();
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Loads every referenced document and derives the per-arm mappings.
    pub fn build(&self) -> Result<PipelineConfig, SessionError> {
        if self.arms.is_empty() {
            return Err(SessionError::Config("at least one arm is required".into()));
        }
        let exoskeleton = KinematicChain::load(self.resolve(&self.exoskeleton))?;
        let robot = self
            .robot
            .as_ref()
            .map(|p| KinematicChain::load(self.resolve(p)))
            .transpose()?;
        let workspace = match (&self.workspace, &robot) {
            (Some(w), _) => Sphere::new(Vec3::from(w.center), w.radius)
                .map_err(|e| SessionError::Config(e.to_string()))?,
            (None, Some(r)) => *r.workspace().ok_or_else(|| {
                SessionError::Config(format!("robot chain `{}` declares no workspace", r.name()))
            })?,
            (None, None) => {
                return Err(SessionError::Config(
                    "a workspace is required when no robot chain is configured".into(),
                ))
            }
        };

        let hand = match self.hand.mode {
            HandMode::None => HandSetup::None,
            HandMode::Gripper => HandSetup::Gripper(self.hand.gripper),
            HandMode::Hand => {
                let path = self.hand.model.as_ref().ok_or_else(|| {
                    SessionError::Config("hand mode needs a hand model".into())
                })?;
                let model = HandModel::load(self.resolve(path))?;
                let alpha = self.hand.alpha.or(model.alpha());
                let cfg = RetargetConfig::with_alpha(alpha.unwrap_or(1.0))
                    .with_beta(self.hand.beta);
                cfg.validate(model.vectors().len())?;
                HandSetup::Hand {
                    model,
                    cfg,
                    auto_alpha: alpha.is_none(),
                }
            }
        };

        let arms = self
            .arms
            .iter()
            .map(|a| {
                let calibration = match &a.calibration {
                    CalibrationSource::File(p) => WorkspaceCalibration::load(self.resolve(p))?,
                    CalibrationSource::Inline {
                        min,
                        max,
                        min_rpy,
                        max_rpy,
                    } => WorkspaceCalibration::from_extremes(*min, *max, *min_rpy, *max_rpy)?,
                };
                let mapping = match a.task_center {
                    Some(c) => {
                        let scale = self.control_scale.ok_or_else(|| {
                            SessionError::Config(format!(
                                "arm `{}` has a task center but no control_scale is set",
                                a.name
                            ))
                        })?;
                        derive_task_mapping(&calibration, Vec3::from(c), scale, &workspace)?
                    }
                    None => derive_workspace_mapping(&calibration, &workspace)?,
                }
                .with_mode(self.mapping_mode);
                let [r, p, y] = a.home_rpy;
                Ok(ArmSetup {
                    name: a.name.clone(),
                    calibration,
                    mapping,
                    rotation: self.rotation,
                    home: rpy_to_quat(r, p, y),
                })
            })
            .collect::<Result<Vec<_>, SessionError>>()?;

        Ok(PipelineConfig {
            exoskeleton,
            robot,
            hand,
            arms,
            ik: IkOptions::default(),
        })
    }
}
