//! Turning flags and run files into environments and policies.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rbench_core::backend::{HardwareConfig, RobotBackend, SimBackend};
use rbench_core::config::{digest_of, BackendKind};
use rbench_core::error::{EnvError, PolicyFileError};
use rbench_core::{make_env, Env, GoalPolicy, HoldPolicy, LinearPolicy, Policy, RunConfig, ZeroPolicy};

use crate::RunFlags;

/// A policy that fails at run time (non-finite output) or cannot be loaded.
#[derive(Debug)]
pub struct PolicyFailure(pub String);

impl std::fmt::Display for PolicyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for PolicyFailure {}

/// Usage and configuration mistakes.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if cause.is::<PolicyFailure>() || cause.is::<PolicyFileError>() {
            return 4;
        }
        if let Some(env) = cause.downcast_ref::<EnvError>() {
            return match env {
                EnvError::Backend(_) => 3,
                _ => 2,
            };
        }
        if cause.is::<rbench_core::ConfigError>() || cause.is::<rbench_core::UsageError>() {
            return 2;
        }
    }
    1
}

/// Run file (if any) with command-line overrides applied, validated.
pub fn resolve(flags: &RunFlags, policy: Option<&str>) -> Result<RunConfig> {
    let mut cfg = match (&flags.config, flags.task) {
        (Some(path), _) => RunConfig::load(path).map_err(|e| Usage(e.to_string()))?,
        (None, Some(task)) => RunConfig::new(task),
        (None, None) => bail!(Usage("give --task or --config".into())),
    };
    if let Some(t) = flags.task {
        cfg.task = t;
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(n) = flags.episodes {
        cfg.episodes = n;
    }
    if let Some(h) = flags.horizon {
        cfg.horizon = Some(h);
    }
    if let Some(b) = flags.backend {
        cfg.backend = b.into();
    }
    if let Some(d) = &flags.device {
        cfg.hardware.device = d.clone();
    }
    if let Some(b) = flags.baud {
        cfg.hardware.baud = b;
    }
    if let Some(p) = &flags.profile {
        cfg.hardware.profile = Some(p.clone());
        cfg.task_config.safety.profile = Some(p.clone());
    }
    if let Some(e) = flags.epsilon_deg {
        cfg.task_config.safety.epsilon_deg = e;
    }
    if let Some(o) = &flags.output {
        cfg.output = o.clone();
    }
    if let Some(p) = policy {
        cfg.policy = p.into();
    }
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

/// Digest of everything that shapes the episodes; the output location is
/// left out so moving a run does not change it.
pub fn run_digest(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output = Default::default();
    digest_of(&c)
}

pub fn build_env(cfg: &RunConfig, digest: &str) -> Result<Env, EnvError> {
    let robot = cfg.task.robot();
    let backend: Box<dyn RobotBackend> = match cfg.backend {
        BackendKind::Sim => Box::new(SimBackend::with_config(robot, cfg.sim.clone())?),
        BackendKind::Hardware => open_hardware(robot, cfg.hardware.clone())?,
    };
    let mut env = make_env(cfg.task, backend, cfg.seed, cfg.resolved_task_config())?;
    env.set_config_digest(digest.into());
    Ok(env)
}

#[cfg(target_os = "linux")]
fn open_hardware(robot: rbench_core::RobotKind, hw: HardwareConfig) -> Result<Box<dyn RobotBackend>, EnvError> {
    Ok(Box::new(rbench_core::backend::HardwareBackend::open(robot, hw)?))
}

#[cfg(not(target_os = "linux"))]
fn open_hardware(_: rbench_core::RobotKind, hw: HardwareConfig) -> Result<Box<dyn RobotBackend>, EnvError> {
    Err(rbench_core::BackendError::Transport { message: format!("{}: serial devices need Linux", hw.device), retries: 0 }.into())
}

pub fn load_policy(cfg: &RunConfig) -> Result<Box<dyn Policy>> {
    let dim = cfg.task.action_dim();
    Ok(match cfg.policy.as_str() {
        "zero" => Box::new(ZeroPolicy { dim }),
        "hold" => Box::new(HoldPolicy),
        "goal" => Box::new(GoalPolicy),
        path => {
            let p = LinearPolicy::load(Path::new(path)).with_context(|| format!("loading policy {path}"))?;
            let file_task = p.task;
            if file_task != cfg.task {
                bail!(PolicyFailure(format!("{path} was trained for {file_task}, not {}", cfg.task)));
            }
            Box::new(p)
        }
    })
}
