//! Episode logs as JSON Lines.
//!
//! Line 1 is `{"kind":"meta",...}`, then one `{"kind":"step",...}` per env
//! step, then a closing `{"kind":"end",...}`. Field order is fixed, so the
//! same episode always serializes to the same bytes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{BasePose, JointState, RobotState};
use crate::env::{DoneReason, Env, EpisodeParams, GoalSnapshot};
use crate::error::LogError;
use crate::safety::{SafetyLimits, ViolationCounts};
use crate::tasks::dclaw::ObjectState;
use crate::variant::TaskVariant;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub schema_version: u32,
    pub tool_version: String,
    pub task: TaskVariant,
    pub seed: u64,
    pub episode: u64,
    pub config_digest: String,
    pub backend: String,
    pub policy: String,
    /// s
    pub dt: f64,
    pub horizon: usize,
    pub limits: SafetyLimits,
    pub params: EpisodeParams,
}

impl LogMeta {
    pub fn new(env: &Env, params: EpisodeParams, policy: String) -> Self {
        LogMeta {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.into(),
            task: env.variant(),
            seed: env.seed(),
            episode: env.episode_index().unwrap_or(0),
            config_digest: env.config_digest().into(),
            backend: env.backend_name(),
            policy,
            dt: env.dt(),
            horizon: env.horizon(),
            limits: env.limits().clone(),
            params,
        }
    }
}

/// Post-step state and outcome of one env step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub joints: JointState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BasePose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<ObjectState>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub airborne: bool,
    pub goal: GoalSnapshot,
    pub action: Vec<f64>,
    pub reward: f64,
    pub score: f64,
    pub done: bool,
    pub done_reason: DoneReason,
    pub violations: ViolationCounts,
}

impl StepRecord {
    pub fn state(&self) -> RobotState {
        RobotState { joints: self.joints.clone(), object: self.object, base: self.base, airborne: self.airborne }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    Fell,
    /// The policy emitted an unusable action before step `step` could run.
    PolicyError { step: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEnd {
    pub termination: Termination,
    pub steps: usize,
    pub total_reward: f64,
}

impl LogEnd {
    pub fn new(termination: Termination, records: &[StepRecord]) -> Self {
        LogEnd { termination, steps: records.len(), total_reward: records.iter().map(|r| r.reward).sum() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub meta: LogMeta,
    pub records: Vec<StepRecord>,
    pub end: LogEnd,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Meta(LogMeta),
    Step(StepRecord),
    End(LogEnd),
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LineRef<'a> {
    Meta(&'a LogMeta),
    Step(&'a StepRecord),
    End(&'a LogEnd),
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

impl EpisodeLog {
    pub fn is_policy_error(&self) -> bool {
        matches!(self.end.termination, Termination::PolicyError { .. })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |l: LineRef| {
            out.push_str(&serde_json::to_string(&l).expect("log lines serialize"));
            out.push('\n');
        };
        push(LineRef::Meta(&self.meta));
        for r in &self.records {
            push(LineRef::Step(r));
        }
        push(LineRef::End(&self.end));
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut meta = None;
        let mut records = Vec::new();
        let mut end = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let fmt = |message: String| LogError::Format { line, message };
            if end.is_some() {
                return Err(fmt("content after the end line".into()));
            }
            if meta.is_none() {
                if let Ok(p) = serde_json::from_str::<VersionProbe>(raw) {
                    if p.schema_version != SCHEMA_VERSION {
                        return Err(LogError::Version(p.schema_version));
                    }
                }
            }
            match serde_json::from_str::<Line>(raw).map_err(|e| fmt(e.to_string()))? {
                Line::Meta(m) if meta.is_none() => meta = Some(m),
                Line::Meta(_) => return Err(fmt("second meta line".into())),
                _ if meta.is_none() => return Err(fmt("first line must be the meta header".into())),
                Line::Step(r) => records.push(r),
                Line::End(e) => end = Some(e),
            }
        }
        let meta = meta.ok_or(LogError::Format { line: 0, message: "empty log".into() })?;
        let end = end.ok_or(LogError::Format { line: 0, message: "log has no end line (truncated?)".into() })?;
        Ok(EpisodeLog { meta, records, end })
    }

    pub fn read(path: &Path) -> Result<Self, LogError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    /// Writes via a temporary sibling and a rename, so readers never see a
    /// half-written log.
    pub fn write(&self, path: &Path) -> Result<(), LogError> {
        Ok(write_atomic(path, self.to_jsonl().as_bytes())?)
    }

    /// `<task>_s<seed>_e<episode>.jsonl`
    pub fn file_name(&self) -> String {
        format!("{}_s{}_e{:04}.jsonl", self.meta.task, self.meta.seed, self.meta.episode)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}
