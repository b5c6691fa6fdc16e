//! Task configuration, run files and config digests.
//!
//! A run file is TOML:
//!
//! ```toml
//! task = "DClawTurnRandom"
//! seed = 7
//! episodes = 10
//! horizon = 100
//! backend = "sim"            # or "hardware"
//! output = "runs/turn"
//! policy = "zero"            # zero | hold | goal | path to a policy file
//!
//! [task_config.safety]
//! epsilon_deg = 5.0
//!
//! [hardware]
//! device = "/dev/ttyUSB0"
//! baud = 1000000
//! ```

use std::path::{Path, PathBuf};

use rbench_dxl::ControlTable;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{HardwareConfig, SimConfig};
use crate::error::ConfigError;
use crate::safety::SafetyLimits;
use crate::tasks::dclaw::DClawSettings;
use crate::tasks::dkitty::DKittySettings;
use crate::variant::TaskVariant;

pub const DEFAULT_DT: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_EVAL_EPISODES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetySettings {
    pub epsilon_deg: f64,
    /// Per-joint speed limit, rad/s; the actuator profile's when absent.
    pub speed_limit: Option<f64>,
    /// Per-joint current limit, A; the actuator profile's when absent.
    pub current_limit: Option<f64>,
    /// Actuator profile to take defaults from; the bundled one when absent.
    pub profile: Option<String>,
}

impl Default for SafetySettings {
    fn default() -> Self {
        SafetySettings { epsilon_deg: 5.0, speed_limit: None, current_limit: None, profile: None }
    }
}

impl SafetySettings {
    pub fn resolve(&self, lower: &[f64], upper: &[f64]) -> Result<SafetyLimits, ConfigError> {
        let table = match &self.profile {
            None => ControlTable::default_profile(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Parse(format!("{p}: {e}")))?;
                ControlTable::from_toml_str(&text).map_err(|e| ConfigError::Invalid(format!("{p}: {e}")))?
            }
        };
        let speed = self.speed_limit.unwrap_or(table.safety.speed_limit_rad_s);
        let current = self.current_limit.unwrap_or(table.safety.current_limit_a);
        SafetyLimits::uniform(lower, upper, self.epsilon_deg.to_radians(), speed, current)
    }
}

/// Everything about a task that is fixed for the life of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Control period, s.
    pub dt: f64,
    pub horizon: usize,
    pub dclaw: DClawSettings,
    pub dkitty: DKittySettings,
    pub safety: SafetySettings,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            dclaw: DClawSettings::default(),
            dkitty: DKittySettings::default(),
            safety: SafetySettings::default(),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.horizon == 0 {
            return Err(ConfigError::Invalid("horizon must be at least 1".into()));
        }
        if !(self.dclaw.pose_period > 0.0) {
            return Err(ConfigError::Invalid("pose oscillation period must be positive".into()));
        }
        let ranges = [
            self.dclaw.turn_initial_range,
            self.dclaw.turn_goal_range,
            self.dclaw.screw_initial_range,
            self.dclaw.screw_velocity_range,
            self.dclaw.object_scale_range,
            self.dclaw.damping_range,
            self.dclaw.friction_loss_range,
            self.dkitty.orient_initial_range,
            self.dkitty.orient_goal_range,
            self.dkitty.walk_distance_range,
            self.dkitty.walk_angle_range,
            self.dkitty.gain_range,
            self.dkitty.mass_range,
            self.dkitty.geom_friction_range,
            self.dkitty.damping_range,
            self.dkitty.friction_loss_range,
        ];
        if ranges.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(ConfigError::Invalid("every sampling range needs finite lo <= hi".into()));
        }
        if !(0.0..=1.0).contains(&self.dkitty.stand_initial_fraction) {
            return Err(ConfigError::Invalid("stand_initial_fraction must lie in [0, 1]".into()));
        }
        if self.dkitty.height_field_cells < 2 || !(self.dkitty.height_field_max >= 0.0) {
            return Err(ConfigError::Invalid("height field needs >= 2 cells and a non-negative max height".into()));
        }
        Ok(())
    }
}

/// Hex SHA-256 of a value's JSON form.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config values serialize");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Sim,
    Hardware,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskVariant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Overrides `task_config.horizon` when set.
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default)]
    pub task_config: TaskConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub hardware: HardwareConfig,
}

fn default_episodes() -> usize {
    1
}

fn default_backend() -> BackendKind {
    BackendKind::Sim
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_policy() -> String {
    "zero".into()
}

impl RunConfig {
    pub fn new(task: TaskVariant) -> Self {
        RunConfig {
            task,
            seed: 0,
            episodes: default_episodes(),
            horizon: None,
            backend: BackendKind::Sim,
            output: default_output(),
            policy: default_policy(),
            task_config: TaskConfig::default(),
            sim: SimConfig::default(),
            hardware: HardwareConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.episodes == 0 {
            return Err(ConfigError::Invalid("episodes must be at least 1".into()));
        }
        self.resolved_task_config().validate()
    }

    /// Task config with the top-level horizon folded in.
    pub fn resolved_task_config(&self) -> TaskConfig {
        let mut c = self.task_config.clone();
        if let Some(h) = self.horizon {
            c.horizon = h;
        }
        c
    }

    pub fn digest(&self) -> String {
        digest_of(self)
    }
}
