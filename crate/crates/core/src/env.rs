//! The episode engine: reset, step, rollouts and success evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{clamp_to, ControlMode, EpisodeDynamics, EpisodeInit, RobotBackend, RobotState, SimBackend};
use crate::config::{digest_of, TaskConfig};
use crate::error::{ConfigError, EnvError, UsageError};
use crate::log::{EpisodeLog, LogEnd, LogMeta, StepRecord, Termination};
use crate::observation::{Observation, ObservationLayout};
use crate::policy::Policy;
use crate::safety::{step_violations, SafetyLimits, ViolationCounts};
use crate::success::episode_outcome;
use crate::tasks::dclaw::{self, DClawEpisode, DClawGoal, DClawJointState};
use crate::tasks::dkitty::{self, DKittyEpisode, DKittyGoal, DKittyState, UprightParams};
use crate::variant::{RobotKind, TaskFamily, TaskVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "robot", rename_all = "snake_case")]
pub enum EpisodeParams {
    DClaw(DClawEpisode),
    DKitty(DKittyEpisode),
}

/// Goal as it stood at a given step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalSnapshot {
    Pose { theta_goal: Vec<f64> },
    /// Object goal angle (rad) and how fast it moves (rad/s).
    Object { angle: f64, desired_velocity: f64 },
    Stand { theta_goal: Vec<f64> },
    Orient { angle: f64, facing: [f64; 2] },
    Walk { position: [f64; 2] },
}

impl GoalSnapshot {
    pub fn to_kitty_goal(&self) -> Option<DKittyGoal> {
        match self {
            GoalSnapshot::Stand { theta_goal } => Some(DKittyGoal::Stand { theta_goal: theta_goal.as_slice().try_into().ok()? }),
            GoalSnapshot::Orient { angle, facing } => Some(DKittyGoal::Orient { angle: *angle, facing: *facing }),
            GoalSnapshot::Walk { position } => Some(DKittyGoal::Walk { position: *position }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    None,
    Horizon,
    Fell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Steps taken so far, including this one.
    pub t: usize,
    pub state: RobotState,
    pub goal: GoalSnapshot,
    /// Setpoints actually sent, after clamping.
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub score: f64,
    pub done: bool,
    pub done_reason: DoneReason,
    pub safety: ViolationCounts,
    pub info: StepInfo,
}

impl StepResult {
    pub fn record(&self) -> StepRecord {
        StepRecord {
            t: self.info.t,
            joints: self.info.state.joints.clone(),
            base: self.info.state.base,
            object: self.info.state.object,
            airborne: self.info.state.airborne,
            goal: self.info.goal.clone(),
            action: self.info.action.clone(),
            reward: self.reward,
            score: self.score,
            done: self.done,
            done_reason: self.done_reason,
            violations: self.safety,
        }
    }
}

#[derive(Debug, Clone)]
struct Episode {
    index: u64,
    params: EpisodeParams,
    t: usize,
    done: bool,
    last_action: Vec<f64>,
    /// Screw goal, advanced every step.
    object_goal: f64,
}

struct Evaluated {
    observation: Observation,
    reward: f64,
    score: f64,
    fell: bool,
    goal: GoalSnapshot,
}

pub struct Env {
    variant: TaskVariant,
    config: TaskConfig,
    backend: Box<dyn RobotBackend>,
    seed: u64,
    limits: SafetyLimits,
    digest: String,
    next_episode: u64,
    episode: Option<Episode>,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    task: TaskVariant,
    seed: u64,
    config: &'a TaskConfig,
    limits: &'a SafetyLimits,
}

/// Builds an environment. Nothing moves until the first `reset`.
pub fn make_env(variant: TaskVariant, backend: Box<dyn RobotBackend>, seed: u64, overrides: TaskConfig) -> Result<Env, EnvError> {
    overrides.validate()?;
    if backend.robot() != variant.robot() {
        return Err(ConfigError::RobotMismatch { task: variant.name(), expected: variant.robot(), got: backend.robot() }.into());
    }
    if !backend.modes().contains(&ControlMode::Position) {
        return Err(ConfigError::Invalid("backend must offer position control".into()).into());
    }
    let (lo, hi) = backend.position_bounds();
    if lo.len() != variant.action_dim() {
        return Err(ConfigError::Invalid(format!("backend drives {} joints, task needs {}", lo.len(), variant.action_dim())).into());
    }
    let limits = overrides.safety.resolve(lo, hi)?;
    let digest = digest_of(&DigestInput { task: variant, seed, config: &overrides, limits: &limits });
    Ok(Env { variant, config: overrides, backend, seed, limits, digest, next_episode: 0, episode: None })
}

/// An environment on the built-in simulator.
pub fn make_sim_env(variant: TaskVariant, seed: u64, overrides: TaskConfig) -> Result<Env, EnvError> {
    make_env(variant, Box::new(SimBackend::new(variant.robot())), seed, overrides)
}

fn joints<const N: usize>(v: &[f64]) -> [f64; N] {
    std::array::from_fn(|i| v[i])
}

impl Env {
    pub fn variant(&self) -> TaskVariant {
        self.variant
    }

    pub fn family(&self) -> TaskFamily {
        self.variant.family
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    /// Takes effect at the next reset.
    pub fn set_horizon(&mut self, horizon: usize) -> Result<(), ConfigError> {
        if horizon == 0 {
            return Err(ConfigError::Invalid("horizon must be at least 1".into()));
        }
        self.config.horizon = horizon;
        Ok(())
    }

    pub fn limits(&self) -> &SafetyLimits {
        &self.limits
    }

    pub fn action_dim(&self) -> usize {
        self.variant.action_dim()
    }

    pub fn observation_dim(&self) -> usize {
        self.variant.observation_dim()
    }

    pub fn layout(&self) -> ObservationLayout {
        ObservationLayout::for_family(self.variant.family)
    }

    pub fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.backend.position_bounds();
        (lo.to_vec(), hi.to_vec())
    }

    pub fn backend_name(&self) -> String {
        self.backend.name()
    }

    pub fn backend_mut(&mut self) -> &mut dyn RobotBackend {
        self.backend.as_mut()
    }

    /// Hex digest of task, seed, config and limits; recorded in every log.
    pub fn config_digest(&self) -> &str {
        &self.digest
    }

    /// Lets a caller record the digest of a larger config (e.g. a run file).
    pub fn set_config_digest(&mut self, digest: String) {
        self.digest = digest;
    }

    pub fn episode_index(&self) -> Option<u64> {
        self.episode.as_ref().map(|e| e.index)
    }

    pub fn episode_params(&self) -> Option<&EpisodeParams> {
        self.episode.as_ref().map(|e| &e.params)
    }

    pub fn steps_taken(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.t)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.done)
    }

    /// Starts the next episode in sequence.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        let i = self.next_episode;
        self.reset_episode(i)
    }

    /// Switches to a new seed and starts its first episode.
    pub fn reset_with_seed(&mut self, seed: u64) -> Result<Observation, EnvError> {
        self.seed = seed;
        self.digest = digest_of(&DigestInput { task: self.variant, seed, config: &self.config, limits: &self.limits });
        self.reset_episode(0)
    }

    /// Starts episode `index` of this seed. Episode parameters depend only on
    /// (seed, index, config), so any episode can be regenerated on its own.
    pub fn reset_episode(&mut self, index: u64) -> Result<Observation, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let family = self.variant.family;
        let level = self.variant.level;
        let params = match self.variant.robot() {
            RobotKind::DClaw => EpisodeParams::DClaw(dclaw::sample_episode(family, level, &self.config.dclaw, &mut rng)),
            RobotKind::DKitty => EpisodeParams::DKitty(dkitty::sample_episode(family, level, &self.config.dkitty, &mut rng)),
        };
        let init = match &params {
            EpisodeParams::DClaw(p) => EpisodeInit {
                joint_positions: p.initial_theta.to_vec(),
                object_angle: p.initial_object,
                base_yaw: 0.0,
                dynamics: if level.randomizes_dynamics() { EpisodeDynamics::DClaw(p.dynamics) } else { EpisodeDynamics::Nominal },
            },
            EpisodeParams::DKitty(p) => EpisodeInit {
                joint_positions: p.initial_theta.to_vec(),
                object_angle: None,
                base_yaw: p.initial_yaw,
                dynamics: if level.randomizes_dynamics() {
                    EpisodeDynamics::DKitty(p.dynamics.clone())
                } else {
                    EpisodeDynamics::Nominal
                },
            },
        };
        // drop any stale episode first so a failed reset leaves the env un-reset
        self.episode = None;
        let state = self.backend.reset(&init)?;
        if matches!(family, TaskFamily::DClawTurn | TaskFamily::DClawScrew) && state.object.is_none() {
            return Err(ConfigError::Invalid(format!("{} needs an object angle but the backend reports none", self.variant)).into());
        }
        let object_goal = match &params {
            EpisodeParams::DClaw(DClawEpisode { goal: DClawGoal::Object(g), .. }) => g.theta_goal_obj,
            _ => 0.0,
        };
        let episode = Episode {
            index,
            params,
            t: 0,
            done: false,
            last_action: state.joints.position.clone(),
            object_goal,
        };
        let obs = self.evaluate(&episode, &state).observation;
        self.episode = Some(episode);
        self.next_episode = index + 1;
        Ok(obs)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let n = self.action_dim();
        let ep = self.episode.as_ref().ok_or(UsageError::NotReset)?;
        if ep.done {
            return Err(UsageError::EpisodeDone.into());
        }
        if action.len() != n {
            return Err(UsageError::ActionLength { expected: n, got: action.len() }.into());
        }
        if let Some(i) = action.iter().position(|v| !v.is_finite()) {
            return Err(UsageError::NonFiniteAction(i).into());
        }
        let (lo, hi) = self.backend.position_bounds();
        let clamped = clamp_to(action, lo, hi);
        let sent = self.backend.write_command(ControlMode::Position, &clamped)?;
        let state = self.backend.advance(self.config.dt)?;

        let dt = self.config.dt;
        let horizon = self.config.horizon;
        let ep = self.episode.as_mut().expect("checked above");
        ep.t += 1;
        ep.last_action = sent.clone();
        if let EpisodeParams::DClaw(DClawEpisode { goal: DClawGoal::Object(g), .. }) = &ep.params {
            if self.variant.family == TaskFamily::DClawScrew {
                ep.object_goal = dclaw::screw_goal_update(ep.object_goal, g.desired_velocity, dt);
            }
        }
        let ep = self.episode.as_ref().expect("checked above");
        let ev = self.evaluate(ep, &state);
        let done_reason = if ev.fell {
            DoneReason::Fell
        } else if ep.t >= horizon {
            DoneReason::Horizon
        } else {
            DoneReason::None
        };
        let done = done_reason != DoneReason::None;
        let safety = step_violations(&state.joints.position, &state.joints.velocity, &state.joints.current, &self.limits);
        let t = ep.t;
        self.episode.as_mut().expect("checked above").done = done;
        Ok(StepResult {
            observation: ev.observation,
            reward: ev.reward,
            score: ev.score,
            done,
            done_reason,
            safety,
            info: StepInfo { t, state, goal: ev.goal, action: sent },
        })
    }

    fn evaluate(&self, ep: &Episode, state: &RobotState) -> Evaluated {
        let family = self.variant.family;
        match &ep.params {
            EpisodeParams::DClaw(p) => {
                let js = DClawJointState {
                    theta: joints(&state.joints.position),
                    theta_dot: joints(&state.joints.velocity),
                    last_action: joints(&ep.last_action),
                };
                match &p.goal {
                    DClawGoal::Pose(goal) => {
                        let g = goal.at(ep.t, self.config.dt);
                        Evaluated {
                            observation: dclaw::pose_observation(&js, &g),
                            reward: dclaw::pose_reward(&js, &g),
                            score: dclaw::pose_score(&js.theta, &g),
                            fell: false,
                            goal: GoalSnapshot::Pose { theta_goal: g.to_vec() },
                        }
                    }
                    DClawGoal::Object(g) => {
                        let angle = state.object.map_or(0.0, |o| o.angle);
                        let delta = if family == TaskFamily::DClawScrew {
                            dclaw::screw_error(angle, ep.object_goal)
                        } else {
                            dclaw::turn_error(angle, ep.object_goal)
                        };
                        Evaluated {
                            observation: dclaw::object_observation(family, &js, angle, delta),
                            reward: dclaw::turn_reward(&js, delta, &g.nominal),
                            score: dclaw::object_score(delta),
                            fell: false,
                            goal: GoalSnapshot::Object { angle: ep.object_goal, desired_velocity: g.desired_velocity },
                        }
                    }
                }
            }
            EpisodeParams::DKitty(p) => {
                let ks = kitty_state(state, &ep.last_action);
                let goal = GoalSnapshot::from(&p.goal);
                Evaluated {
                    observation: dkitty::build_observation(&ks, &p.goal),
                    reward: p.goal.reward(&ks),
                    score: p.goal.score(&ks),
                    fell: UprightParams::for_family(family).fallen(ks.upright()),
                    goal,
                }
            }
        }
    }
}

impl From<&DKittyGoal> for GoalSnapshot {
    fn from(g: &DKittyGoal) -> Self {
        match *g {
            DKittyGoal::Stand { theta_goal } => GoalSnapshot::Stand { theta_goal: theta_goal.to_vec() },
            DKittyGoal::Orient { angle, facing } => GoalSnapshot::Orient { angle, facing },
            DKittyGoal::Walk { position } => GoalSnapshot::Walk { position },
        }
    }
}

/// Task-level view of a quadruped's measured state. A backend without torso
/// tracking reports the origin, level.
pub fn kitty_state(state: &RobotState, last_action: &[f64]) -> DKittyState {
    let base = state.base.unwrap_or_default();
    DKittyState {
        position: base.position,
        rotation: base.rotation,
        velocity: base.velocity,
        angular_velocity: base.angular_velocity,
        theta: joints(&state.joints.position),
        theta_dot: joints(&state.joints.velocity),
        last_action: joints(last_action),
    }
}

/// Runs the env's next episode.
pub fn run_episode(env: &mut Env, policy: &dyn Policy, horizon: usize) -> Result<EpisodeLog, EnvError> {
    let index = env.next_episode;
    run_episode_at(env, policy, horizon, index)
}

/// Runs episode `index` for at most `horizon` steps. A policy that emits a
/// non-finite setpoint ends the episode early; the log keeps every step
/// taken before that and records the failure in its end line.
pub fn run_episode_at(env: &mut Env, policy: &dyn Policy, horizon: usize, index: u64) -> Result<EpisodeLog, EnvError> {
    env.set_horizon(horizon)?;
    let mut obs = env.reset_episode(index)?;
    let params = env.episode_params().expect("just reset").clone();
    let meta = LogMeta::new(env, params, policy.name());
    let mut records = Vec::with_capacity(horizon);
    let termination = loop {
        let t = records.len();
        let action = policy.act(t, &obs);
        if action.len() != env.action_dim() {
            return Err(UsageError::ActionLength { expected: env.action_dim(), got: action.len() }.into());
        }
        if let Some(i) = action.iter().position(|v| !v.is_finite()) {
            break Termination::PolicyError { step: t, message: format!("non-finite action entry {i}") };
        }
        let r = env.step(&action)?;
        records.push(r.record());
        if r.done {
            break match r.done_reason {
                DoneReason::Fell => Termination::Fell,
                _ => Termination::Horizon,
            };
        }
        obs = r.observation;
    };
    let end = LogEnd::new(termination, &records);
    Ok(EpisodeLog { meta, records, end })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFlag {
    pub episode: u64,
    pub message: String,
}

/// Success and safety over a batch of evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub task: TaskVariant,
    pub n_episodes: usize,
    pub success_fraction: f64,
    pub per_episode: Vec<bool>,
    /// Violation totals for each episode.
    pub safety_totals: Vec<ViolationCounts>,
    pub mean_return: f64,
    pub mean_score: f64,
    /// Episodes that errored or were cut short by the policy; they count as
    /// failures.
    pub flagged: Vec<EpisodeFlag>,
}

impl SuccessReport {
    pub fn safety_sum(&self) -> ViolationCounts {
        self.safety_totals.iter().copied().sum()
    }
}

pub struct Evaluation {
    pub report: SuccessReport,
    /// `None` where the episode could not be run at all.
    pub logs: Vec<Option<EpisodeLog>>,
}

/// Runs episodes `0..n` of fresh environments from `factory` and scores them
/// from their logs. Episodes run in parallel.
pub fn evaluate<F>(factory: F, policy: &dyn Policy, n_episodes: usize) -> Result<SuccessReport, EnvError>
where
    F: Fn() -> Result<Env, EnvError> + Sync,
{
    Ok(evaluate_detailed(factory, policy, n_episodes, true)?.report)
}

/// As [`evaluate`], also returning the logs; `parallel = false` runs one
/// episode at a time (needed when every env shares one hardware bus).
pub fn evaluate_detailed<F>(factory: F, policy: &dyn Policy, n_episodes: usize, parallel: bool) -> Result<Evaluation, EnvError>
where
    F: Fn() -> Result<Env, EnvError> + Sync,
{
    if n_episodes == 0 {
        return Err(UsageError::Other("evaluation needs at least one episode".into()).into());
    }
    let task = factory()?.variant();
    let run = |i: usize| -> Result<EpisodeLog, EnvError> {
        let mut env = factory()?;
        let h = env.horizon();
        run_episode_at(&mut env, policy, h, i as u64)
    };
    let results: Vec<Result<EpisodeLog, EnvError>> =
        if parallel { (0..n_episodes).into_par_iter().map(run).collect() } else { (0..n_episodes).map(run).collect() };

    let mut per_episode = Vec::with_capacity(n_episodes);
    let mut safety_totals = Vec::with_capacity(n_episodes);
    let mut flagged = Vec::new();
    let (mut ret, mut score) = (0.0, 0.0);
    let mut logs = Vec::with_capacity(n_episodes);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(log) => {
                let o = episode_outcome(&log);
                per_episode.push(o.success);
                safety_totals.push(o.safety.totals);
                ret += o.total_reward;
                score += o.mean_score;
                if let Some(message) = o.flag {
                    flagged.push(EpisodeFlag { episode: i as u64, message });
                }
                logs.push(Some(log));
            }
            Err(e) => {
                per_episode.push(false);
                safety_totals.push(ViolationCounts::default());
                flagged.push(EpisodeFlag { episode: i as u64, message: e.to_string() });
                logs.push(None);
            }
        }
    }
    let n = n_episodes as f64;
    let successes = per_episode.iter().filter(|&&b| b).count();
    let report = SuccessReport {
        task,
        n_episodes,
        success_fraction: successes as f64 / n,
        per_episode,
        safety_totals,
        mean_return: ret / n,
        mean_score: score / n,
        flagged,
    };
    Ok(Evaluation { report, logs })
}
