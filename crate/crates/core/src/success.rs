//! Task success judged from an episode log alone.

use crate::env::{kitty_state, GoalSnapshot};
use crate::error::SuccessError;
use crate::log::{EpisodeLog, StepRecord, Termination};
use crate::safety::{aggregate, SafetySummary};
use crate::tasks::dclaw;
use crate::tasks::mean_abs_error;
use crate::variant::TaskFamily;

fn object_delta(family: TaskFamily, r: &StepRecord) -> Result<f64, SuccessError> {
    let angle = r.object.ok_or(SuccessError::MissingState("object angle"))?.angle;
    let GoalSnapshot::Object { angle: goal, .. } = r.goal else {
        return Err(SuccessError::MissingState("object goal"));
    };
    Ok(if family == TaskFamily::DClawScrew { dclaw::screw_error(angle, goal) } else { dclaw::turn_error(angle, goal) })
}

/// Whether the logged episode meets its task's success criterion.
pub fn episode_success(log: &EpisodeLog) -> Result<bool, SuccessError> {
    let records = &log.records;
    let last = records.last().ok_or(SuccessError::EmptyLog)?;
    let family = log.meta.task.family;
    match family {
        TaskFamily::DClawPose => {
            let errors = records
                .iter()
                .map(|r| match &r.goal {
                    GoalSnapshot::Pose { theta_goal } => Ok(mean_abs_error(theta_goal, &r.joints.position)),
                    _ => Err(SuccessError::MissingState("pose goal")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            dclaw::pose_success(&errors)
        }
        TaskFamily::DClawTurn => Ok(dclaw::turn_success(object_delta(family, last)?)),
        TaskFamily::DClawScrew => {
            let deltas = records.iter().map(|r| object_delta(family, r)).collect::<Result<Vec<_>, _>>()?;
            dclaw::screw_success(&deltas)
        }
        TaskFamily::DKittyStand | TaskFamily::DKittyOrient | TaskFamily::DKittyWalk => {
            let goal = last.goal.to_kitty_goal().ok_or(SuccessError::MissingState("quadruped goal"))?;
            if last.base.is_none() {
                return Err(SuccessError::MissingState("torso pose"));
            }
            Ok(goal.success(&kitty_state(&last.state(), &last.action)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub total_reward: f64,
    /// Mean per-step score.
    pub mean_score: f64,
    pub safety: SafetySummary,
    /// Why the episode counts as a flagged failure, if it does.
    pub flag: Option<String>,
}

/// Success, return, score and safety for one log. Policy errors and logs
/// that cannot be judged are failures, with the reason in `flag`.
pub fn episode_outcome(log: &EpisodeLog) -> EpisodeOutcome {
    let n = log.records.len();
    let total_reward = log.records.iter().map(|r| r.reward).sum();
    let mean_score = if n == 0 { 0.0 } else { log.records.iter().map(|r| r.score).sum::<f64>() / n as f64 };
    let safety = aggregate(log);
    let (success, flag) = match (&log.end.termination, episode_success(log)) {
        (Termination::PolicyError { step, message }, _) => (false, Some(format!("policy error at step {step}: {message}"))),
        (_, Ok(s)) => (s, None),
        (_, Err(e)) => (false, Some(e.to_string())),
    };
    EpisodeOutcome { success, total_reward, mean_score, safety, flag }
}
