use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{Sphere, Vec3};
use crate::mapping::{MappingError, MappingMode, MappingParams};

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error("failed to parse game config: {0}")]
    Parse(String),
    #[error("unknown game variant `{0}`")]
    UnknownVariant(String),
    #[error("operator returned {got} poses for {expected} arms")]
    OperatorArity { expected: usize, got: usize },
    #[error("recording: {0}")]
    Recording(String),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const BUILTIN: [(&str, &str); 4] = [
    ("small_small", include_str!("../../../../configs/variants/small_small.toml")),
    ("large_large", include_str!("../../../../configs/variants/large_large.toml")),
    ("medium_small", include_str!("../../../../configs/variants/medium_small.toml")),
    ("medium_medium", include_str!("../../../../configs/variants/medium_medium.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    /// Center of this arm's game workspace in the robot frame, meters.
    pub workspace_center: [f64; 3],
    /// Calibrated human wrist workspace center, meters.
    pub human_center: [f64; 3],
    pub human_radius: f64,
}

/// Parameters of the scripted operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSettings {
    /// Maximum human wrist speed, m/s.
    #[serde(default = "default_speed")]
    pub human_speed: f64,
    /// Stationary std-dev of the noise, per axis, at the end-effector, meters.
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    /// Noise correlation time, seconds.
    #[serde(default = "default_tau")]
    pub noise_tau: f64,
}

fn default_speed() -> f64 {
    0.25
}

fn default_sigma() -> f64 {
    0.02
}

fn default_tau() -> f64 {
    0.5
}

impl Default for OperatorSettings {
    fn default() -> Self {
        Self {
            human_speed: default_speed(),
            noise_sigma: default_sigma(),
            noise_tau: default_tau(),
        }
    }
}

/// A game variant plus session settings. Lengths are meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub name: String,
    pub workspace_radius: f64,
    pub target_radius: f64,
    pub ee_radius: f64,
    pub keep_time: f64,
    pub control_scale: f64,
    pub session_duration: f64,
    pub tick_hz: f64,
    pub rng_seed: u64,
    pub bimanual: bool,
    pub target_timeout: f64,
    pub mapping_mode: MappingMode,
    pub arms: Vec<ArmConfig>,
    pub operator: OperatorSettings,
}

/// On-disk form: sphere sizes in centimeters as in the published table.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameConfigDoc {
    name: String,
    workspace_radius_cm: f64,
    target_radius_cm: f64,
    ee_radius_cm: f64,
    keep_time_s: f64,
    control_scale: f64,
    #[serde(default = "default_duration")]
    session_duration_s: f64,
    #[serde(default = "default_tick_hz")]
    tick_hz: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_true")]
    bimanual: bool,
    #[serde(default = "default_timeout")]
    target_timeout_s: f64,
    #[serde(default)]
    mapping_mode: MappingMode,
    arms: Vec<ArmConfig>,
    #[serde(default)]
    operator: OperatorSettings,
}

fn default_duration() -> f64 {
    30.0
}

fn default_tick_hz() -> f64 {
    100.0
}

fn default_true() -> bool {
    true
}

fn default_timeout() -> f64 {
    10.0
}

impl From<GameConfigDoc> for GameConfig {
    fn from(d: GameConfigDoc) -> Self {
        Self {
            name: d.name,
            workspace_radius: d.workspace_radius_cm / 100.0,
            target_radius: d.target_radius_cm / 100.0,
            ee_radius: d.ee_radius_cm / 100.0,
            keep_time: d.keep_time_s,
            control_scale: d.control_scale,
            session_duration: d.session_duration_s,
            tick_hz: d.tick_hz,
            rng_seed: d.seed,
            bimanual: d.bimanual,
            target_timeout: d.target_timeout_s,
            mapping_mode: d.mapping_mode,
            arms: d.arms,
            operator: d.operator,
        }
    }
}

impl From<&GameConfig> for GameConfigDoc {
    fn from(c: &GameConfig) -> Self {
        Self {
            name: c.name.clone(),
            workspace_radius_cm: c.workspace_radius * 100.0,
            target_radius_cm: c.target_radius * 100.0,
            ee_radius_cm: c.ee_radius * 100.0,
            keep_time_s: c.keep_time,
            control_scale: c.control_scale,
            session_duration_s: c.session_duration,
            tick_hz: c.tick_hz,
            seed: c.rng_seed,
            bimanual: c.bimanual,
            target_timeout_s: c.target_timeout,
            mapping_mode: c.mapping_mode,
            arms: c.arms.clone(),
            operator: c.operator.clone(),
        }
    }
}

impl GameConfig {
    pub fn from_toml_str(doc: &str) -> Result<Self, SimulatorError> {
        let d: GameConfigDoc =
            toml::from_str(doc).map_err(|e| SimulatorError::Parse(e.to_string()))?;
        GameConfig::from(d).validated()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimulatorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SimulatorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// One of the four shipped variants, by file stem.
    pub fn builtin(name: &str) -> Result<Self, SimulatorError> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| SimulatorError::UnknownVariant(name.to_string()))
            .and_then(|(_, doc)| Self::from_toml_str(doc))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&GameConfigDoc::from(self)).expect("config serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validated(self) -> Result<Self, SimulatorError> {
        let bad = |m: String| Err(SimulatorError::InvalidConfig(m));
        let positive = [
            ("workspace_radius", self.workspace_radius),
            ("target_radius", self.target_radius),
            ("ee_radius", self.ee_radius),
            ("control_scale", self.control_scale),
            ("session_duration", self.session_duration),
            ("tick_hz", self.tick_hz),
            ("target_timeout", self.target_timeout),
            ("human_speed", self.operator.human_speed),
            ("noise_tau", self.operator.noise_tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.keep_time >= 0.0) {
            return bad(format!("keep_time must be non-negative, got {}", self.keep_time));
        }
        if !(self.operator.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative".into());
        }
        if self.target_radius <= self.ee_radius {
            return bad("target radius must exceed EE radius".into());
        }
        if self.workspace_radius <= self.target_radius {
            return bad("workspace radius must exceed target radius".into());
        }
        let want = if self.bimanual { 2 } else { 1 };
        if self.arms.len() != want {
            return bad(format!("expected {want} arms, got {}", self.arms.len()));
        }
        for a in &self.arms {
            if !(a.human_radius > 0.0) {
                return bad(format!("arm `{}` human_radius must be positive", a.name));
            }
        }
        Ok(self)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_hz
    }

    pub fn ticks(&self) -> u64 {
        (self.session_duration * self.tick_hz).round() as u64
    }

    pub fn workspaces(&self) -> Vec<Sphere> {
        self.arms
            .iter()
            .map(|a| {
                Sphere::new(Vec3::from(a.workspace_center), self.workspace_radius)
                    .expect("validated radius")
            })
            .collect()
    }

    /// Task mapping per arm: `control_scale` about the arm's workspace center.
    pub fn mappings(&self) -> Vec<MappingParams> {
        self.arms
            .iter()
            .zip(self.workspaces())
            .map(|(a, ws)| {
                let mut p = MappingParams::new(
                    self.control_scale,
                    Vec3::from(a.human_center),
                    ws.center(),
                    ws,
                )
                .expect("validated scale")
                .with_mode(self.mapping_mode);
                p.exceeds_workspace = self.control_scale * a.human_radius > ws.radius();
                p
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the JSON form, hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
