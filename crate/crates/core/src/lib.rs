//! Robot-learning benchmark environments for a three-fingered claw and a
//! quadruped, with dense rewards, sparse scores, success criteria and
//! hardware-safety counters; a simulated and a servo-bus backend; JSON Lines
//! episode logs; and a cross-entropy-method baseline.
//!
//! ```
//! use rbench_core::{make_sim_env, run_episode, GoalPolicy, TaskConfig};
//!
//! let mut env = make_sim_env("DClawPoseFixed".parse()?, 0, TaskConfig::default())?;
//! let log = run_episode(&mut env, &GoalPolicy, 20)?;
//! assert_eq!(log.records.len(), 20);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod backend;
pub mod cem;
pub mod config;
pub mod env;
pub mod error;
pub mod kinematics;
pub mod log;
pub mod observation;
pub mod policy;
pub mod report;
pub mod safety;
pub mod success;
pub mod tasks;
pub mod variant;

pub use backend::{ControlMode, RobotBackend, SimBackend};
pub use cem::{cem_optimize, cem_search, CemConfig, LinearPolicy};
pub use config::{RunConfig, TaskConfig};
pub use env::{evaluate, make_env, make_sim_env, run_episode, DoneReason, Env, StepResult, SuccessReport};
pub use error::{BackendError, ConfigError, EnvError, UsageError};
pub use log::EpisodeLog;
pub use observation::{Observation, ObservationLayout};
pub use policy::{GoalPolicy, HoldPolicy, Policy, ScriptedPolicy, ZeroPolicy};
pub use report::{build_report, Report};
pub use safety::{SafetyLimits, ViolationCounts};
pub use variant::{RobotKind, TaskFamily, TaskLevel, TaskVariant};
