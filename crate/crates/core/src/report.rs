//! Per-task summaries computed from episode logs alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::UsageError;
use crate::log::{EpisodeLog, TOOL_VERSION};
use crate::safety::ViolationCounts;
use crate::success::episode_outcome;
use crate::variant::TaskVariant;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFlag {
    pub source: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: TaskVariant,
    pub episodes: usize,
    pub successes: usize,
    pub success_fraction: f64,
    pub mean_return: f64,
    /// Mean over episodes of each episode's mean per-step score.
    pub mean_score: f64,
    /// Violating-joint counts summed over every step of every episode.
    pub safety_totals: ViolationCounts,
    /// `safety_totals` per episode: position, velocity, current.
    pub safety_per_episode: [f64; 3],
    /// `safety_totals` per step: position, velocity, current.
    pub safety_per_step: [f64; 3],
    pub steps: u64,
    pub config_digests: Vec<String>,
    pub flagged: Vec<ReportFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub tasks: Vec<TaskReport>,
}

/// Groups logs by task, in task-registry order; `source` names each log in
/// flags (usually its path).
pub fn build_report<'a>(logs: impl IntoIterator<Item = (&'a str, &'a EpisodeLog)>) -> Result<Report, UsageError> {
    let mut groups: BTreeMap<TaskVariant, Vec<(&str, &EpisodeLog)>> = BTreeMap::new();
    for (src, log) in logs {
        groups.entry(log.meta.task).or_default().push((src, log));
    }
    if groups.is_empty() {
        return Err(UsageError::Other("no episode logs to report on".into()));
    }
    let tasks = groups.into_iter().map(|(task, logs)| task_report(task, &logs)).collect();
    Ok(Report { schema_version: REPORT_SCHEMA_VERSION, tool_version: TOOL_VERSION.into(), tasks })
}

fn task_report(task: TaskVariant, logs: &[(&str, &EpisodeLog)]) -> TaskReport {
    let n = logs.len();
    let mut successes = 0;
    let (mut ret, mut score) = (0.0, 0.0);
    let mut totals = ViolationCounts::default();
    let mut steps = 0;
    let mut flagged = Vec::new();
    let mut digests: Vec<String> = Vec::new();
    for (src, log) in logs {
        let o = episode_outcome(log);
        successes += usize::from(o.success);
        ret += o.total_reward;
        score += o.mean_score;
        totals += o.safety.totals;
        steps += o.safety.steps;
        if let Some(message) = o.flag {
            flagged.push(ReportFlag { source: src.to_string(), message });
        }
        if !digests.contains(&log.meta.config_digest) {
            digests.push(log.meta.config_digest.clone());
        }
    }
    digests.sort();
    let t = [totals.position as f64, totals.velocity as f64, totals.current as f64];
    let per = |d: f64| t.map(|v| if d > 0.0 { v / d } else { 0.0 });
    TaskReport {
        task,
        episodes: n,
        successes,
        success_fraction: successes as f64 / n as f64,
        mean_return: ret / n as f64,
        mean_score: score / n as f64,
        safety_totals: totals,
        safety_per_episode: per(n as f64),
        safety_per_step: per(steps as f64),
        steps,
        config_digests: digests,
        flagged,
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fixed-width text table, one row per task, then any flags.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<26} {:>4} {:>8} {:>11} {:>10} {:>8} {:>8} {:>8} {:>14}",
            "task", "eps", "success", "mean_ret", "mean_score", "pos_viol", "vel_viol", "cur_viol", "viol/episode"
        );
        for t in &self.tasks {
            let per_ep: f64 = t.safety_per_episode.iter().sum();
            let _ = writeln!(
                s,
                "{:<26} {:>4} {:>8.3} {:>11.3} {:>10.4} {:>8} {:>8} {:>8} {:>14.3}",
                t.task.name(),
                t.episodes,
                t.success_fraction,
                t.mean_return,
                t.mean_score,
                t.safety_totals.position,
                t.safety_totals.velocity,
                t.safety_totals.current,
                per_ep
            );
        }
        for t in &self.tasks {
            for f in &t.flagged {
                let _ = writeln!(s, "flagged {} ({}): {}", t.task, f.source, f.message);
            }
        }
        s
    }
}
