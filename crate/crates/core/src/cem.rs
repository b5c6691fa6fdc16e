//! Cross-entropy method over linear policies.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{run_episode_at, Env};
use crate::error::{CemError, ConfigError, EnvError, PolicyFileError};
use crate::log::{write_atomic, TOOL_VERSION};
use crate::observation::Observation;
use crate::policy::Policy;
use crate::variant::TaskVariant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub init_std: f64,
    pub std_floor: f64,
    pub episodes_per_candidate: usize,
    pub seed: u64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            population: 64,
            elite_fraction: 0.2,
            iterations: 50,
            init_std: 0.3,
            std_floor: 0.01,
            episodes_per_candidate: 1,
            seed: 0,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return bad("elite fraction must lie strictly between 0 and 1");
        }
        if self.population < 4 {
            return bad("population must be at least 4");
        }
        if !(self.std_floor > 0.0 && self.std_floor.is_finite()) {
            return bad("std floor must be positive");
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return bad("initial std must be positive");
        }
        if self.iterations == 0 || self.episodes_per_candidate == 0 {
            return bad("iterations and episodes per candidate must be at least 1");
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).round() as usize).clamp(1, self.population - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    /// Over this iteration's fresh samples.
    pub mean_return: f64,
    pub max_return: f64,
    /// Over the refit set, which may include carried-over elites.
    pub elite_mean_return: f64,
    pub best_return: f64,
    pub mean_std: f64,
    /// Samples whose return was not finite.
    pub non_finite: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemResult {
    pub best: Vec<f64>,
    pub best_return: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub curve: Vec<IterationStats>,
    /// Total samples scored as -inf for a non-finite return.
    pub flagged: usize,
}

/// Maximizes `objective` from `init_mean`. Elites survive into the next
/// round with their cached scores, so with a deterministic objective the
/// elite mean never decreases. `on_iteration` sees each round's stats and
/// the best parameters so far; returning `true` stops early.
pub fn cem_search<F>(
    init_mean: &[f64],
    config: &CemConfig,
    objective: F,
    on_iteration: impl FnMut(&IterationStats, &[f64]) -> bool,
) -> Result<CemResult, ConfigError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cem_search_scaled(init_mean, &vec![1.0; init_mean.len()], config, objective, on_iteration)
}

/// As [`cem_search`], with the initial std of dimension `j` set to
/// `config.init_std * std_scale[j]`.
pub fn cem_search_scaled<F>(
    init_mean: &[f64],
    std_scale: &[f64],
    config: &CemConfig,
    objective: F,
    mut on_iteration: impl FnMut(&IterationStats, &[f64]) -> bool,
) -> Result<CemResult, ConfigError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let dim = init_mean.len();
    if dim == 0 || init_mean.iter().any(|v| !v.is_finite()) {
        return Err(ConfigError::Invalid("initial mean must be non-empty and finite".into()));
    }
    if std_scale.len() != dim || std_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(ConfigError::Invalid("std scale needs one positive entry per dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mean = init_mean.to_vec();
    let mut std: Vec<f64> = std_scale.iter().map(|s| config.init_std * s).collect();
    let n_elite = config.elite_count();
    let mut elites: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut curve = Vec::with_capacity(config.iterations);
    let mut flagged = 0;
    let mut best: (Vec<f64>, f64) = (mean.clone(), f64::NEG_INFINITY);

    for iteration in 0..config.iterations {
        let samples: Vec<Vec<f64>> = (0..config.population)
            .map(|_| {
                (0..dim)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mean[j] + std[j] * z
                    })
                    .collect()
            })
            .collect();
        let raw: Vec<f64> = samples.par_iter().map(|p| objective(p)).collect();
        let non_finite = raw.iter().filter(|r| !r.is_finite()).count();
        flagged += non_finite;
        let scores: Vec<f64> = raw.iter().map(|&r| if r.is_finite() { r } else { f64::NEG_INFINITY }).collect();

        let finite: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
        let mean_return =
            if finite.is_empty() { f64::NEG_INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 };
        let max_return = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let mut pool: Vec<(Vec<f64>, f64)> = samples.into_iter().zip(scores).collect();
        pool.append(&mut elites);
        // stable sort: ties keep sampling order
        pool.sort_by(|a, b| b.1.total_cmp(&a.1));
        pool.truncate(n_elite);
        elites = pool;

        let k = elites.len() as f64;
        for j in 0..dim {
            let m = elites.iter().map(|(p, _)| p[j]).sum::<f64>() / k;
            let var = elites.iter().map(|(p, _)| (p[j] - m).powi(2)).sum::<f64>() / k;
            mean[j] = m;
            std[j] = var.sqrt().max(config.std_floor);
        }
        if elites[0].1 > best.1 {
            best = elites[0].clone();
        }
        let stats = IterationStats {
            iteration,
            mean_return,
            max_return,
            elite_mean_return: elites.iter().map(|e| e.1).sum::<f64>() / k,
            best_return: best.1,
            mean_std: std.iter().sum::<f64>() / dim as f64,
            non_finite,
        };
        let stop = on_iteration(&stats, &best.0);
        curve.push(stats);
        if stop {
            break;
        }
    }
    Ok(CemResult { best: best.0, best_return: best.1, mean, std, curve, flagged })
}

/// `mid + half * tanh(W obs + b)`, so every output lies within the joint
/// bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    pub task: TaskVariant,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Row-major, `act_dim x obs_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearPolicy {
    pub fn param_count(obs_dim: usize, act_dim: usize) -> usize {
        act_dim * (obs_dim + 1)
    }

    /// Zero weights and bias: always commands the middle of the range.
    pub fn zeros(task: TaskVariant, lower: &[f64], upper: &[f64]) -> Self {
        let (o, a) = (task.observation_dim(), task.action_dim());
        Self::from_params(task, lower, upper, &vec![0.0; Self::param_count(o, a)])
    }

    /// `params` is the weights row-major followed by the bias.
    pub fn from_params(task: TaskVariant, lower: &[f64], upper: &[f64], params: &[f64]) -> Self {
        let (o, a) = (task.observation_dim(), task.action_dim());
        assert_eq!(params.len(), Self::param_count(o, a), "parameter count");
        assert!(lower.len() == a && upper.len() == a, "bounds length");
        LinearPolicy {
            task,
            obs_dim: o,
            act_dim: a,
            weights: params[..a * o].to_vec(),
            bias: params[a * o..].to_vec(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn forward(&self, obs: &[f64]) -> Vec<f64> {
        (0..self.act_dim)
            .map(|i| {
                let row = &self.weights[i * self.obs_dim..(i + 1) * self.obs_dim];
                let z = row.iter().zip(obs).map(|(w, x)| w * x).sum::<f64>() + self.bias[i];
                let (lo, hi) = (self.lower[i], self.upper[i]);
                let out = 0.5 * (lo + hi) + 0.5 * (hi - lo) * z.tanh();
                // tanh saturates to exactly +-1, but rounding can still nudge past a bound
                out.clamp(lo, hi)
            })
            .collect()
    }

    pub fn to_file(&self, config_digest: &str) -> PolicyFile {
        PolicyFile {
            format: POLICY_FORMAT.into(),
            version: POLICY_VERSION,
            tool_version: TOOL_VERSION.into(),
            task: self.task,
            config_digest: config_digest.into(),
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            weights: self.weights.chunks(self.obs_dim).map(<[f64]>::to_vec).collect(),
            bias: self.bias.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn save(&self, path: &Path, config_digest: &str) -> Result<(), PolicyFileError> {
        let text = serde_json::to_string_pretty(&self.to_file(config_digest)).expect("policy serializes");
        Ok(write_atomic(path, format!("{text}\n").as_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, PolicyFileError> {
        PolicyFile::from_json(&std::fs::read_to_string(path)?)?.into_policy()
    }
}

impl Policy for LinearPolicy {
    fn act(&self, _: usize, obs: &Observation) -> Vec<f64> {
        self.forward(&obs.values)
    }

    fn name(&self) -> String {
        format!("linear/{}", self.task)
    }
}

pub const POLICY_FORMAT: &str = "rbench-linear-policy";
pub const POLICY_VERSION: u32 = 1;

/// On-disk policy, JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub task: TaskVariant,
    pub config_digest: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// One row per action entry.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PolicyFile {
    pub fn from_json(text: &str) -> Result<Self, PolicyFileError> {
        serde_json::from_str(text).map_err(|e| PolicyFileError::Format(e.to_string()))
    }

    pub fn into_policy(self) -> Result<LinearPolicy, PolicyFileError> {
        let bad = |m: String| Err(PolicyFileError::Format(m));
        if self.format != POLICY_FORMAT {
            return bad(format!("not a linear policy file (format `{}`)", self.format));
        }
        if self.version != POLICY_VERSION {
            return bad(format!("unsupported policy version {}", self.version));
        }
        let (o, a) = (self.task.observation_dim(), self.task.action_dim());
        if (self.obs_dim, self.act_dim) != (o, a) {
            return bad(format!("{} expects {o}x{a}, file declares {}x{}", self.task, self.obs_dim, self.act_dim));
        }
        if self.weights.len() != a || self.weights.iter().any(|r| r.len() != o) {
            return bad("weight matrix shape does not match the declared dimensions".into());
        }
        if self.bias.len() != a || self.lower.len() != a || self.upper.len() != a {
            return bad("bias and bounds need one entry per action".into());
        }
        let params: Vec<f64> = self.weights.iter().flatten().chain(&self.bias).copied().collect();
        if params.iter().chain(&self.lower).chain(&self.upper).any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l < u)) {
            return bad("each lower bound must be below its upper bound".into());
        }
        Ok(LinearPolicy::from_params(self.task, &self.lower, &self.upper, &params))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemOutcome {
    pub policy: LinearPolicy,
    pub result: CemResult,
}

/// Trains a linear policy on environments from `factory`. Every candidate is
/// scored on the same episodes `0..episodes_per_candidate`, by mean return.
pub fn cem_optimize<F>(
    factory: F,
    config: &CemConfig,
    on_iteration: impl FnMut(&IterationStats, &LinearPolicy) -> bool,
) -> Result<CemOutcome, CemError>
where
    F: Fn() -> Result<Env, EnvError> + Sync,
{
    config.validate()?;
    let probe = factory()?;
    let task = probe.variant();
    let (lower, upper) = probe.action_bounds();
    let horizon = probe.horizon();
    drop(probe);
    let dim = LinearPolicy::param_count(task.observation_dim(), task.action_dim());
    let episodes = config.episodes_per_candidate as u64;

    let objective = |params: &[f64]| -> f64 {
        let policy = LinearPolicy::from_params(task, &lower, &upper, params);
        let mut total = 0.0;
        for i in 0..episodes {
            let ret = factory()
                .and_then(|mut env| run_episode_at(&mut env, &policy, horizon, i))
                .ok()
                .filter(|log| !log.is_policy_error())
                .map_or(f64::NAN, |log| log.end.total_reward);
            total += ret;
        }
        total / episodes as f64
    };
    // fan-in scaling: a row of weights starts with the same output spread as its bias
    let o = task.observation_dim();
    let w_scale = 1.0 / (o as f64).sqrt();
    let scale: Vec<f64> = (0..dim).map(|j| if j < task.action_dim() * o { w_scale } else { 1.0 }).collect();
    let mut on_iteration = on_iteration;
    let result = cem_search_scaled(&vec![0.0; dim], &scale, config, objective, |stats, best| {
        on_iteration(stats, &LinearPolicy::from_params(task, &lower, &upper, best))
    })?;
    let policy = LinearPolicy::from_params(task, &lower, &upper, &result.best);
    Ok(CemOutcome { policy, result })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub tool_version: String,
    pub task: TaskVariant,
    pub config_digest: String,
    pub cem: CemConfig,
    pub iterations: Vec<IterationStats>,
}
