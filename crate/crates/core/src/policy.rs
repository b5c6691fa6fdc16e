//! Policies map observations to joint-position setpoints.

use crate::observation::Observation;

pub trait Policy: Send + Sync {
    /// `t` is the number of steps already taken this episode.
    fn act(&self, t: usize, obs: &Observation) -> Vec<f64>;

    fn name(&self) -> String {
        "custom".into()
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&self, t: usize, obs: &Observation) -> Vec<f64> {
        (**self).act(t, obs)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

/// Always commands zeros.
#[derive(Debug, Clone, Copy)]
pub struct ZeroPolicy {
    pub dim: usize,
}

impl Policy for ZeroPolicy {
    fn act(&self, _: usize, _: &Observation) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    fn name(&self) -> String {
        "zero".into()
    }
}

/// Commands the current joint angles, i.e. tries to stay put.
#[derive(Debug, Clone, Copy, Default)]
pub struct HoldPolicy;

impl Policy for HoldPolicy {
    fn act(&self, _: usize, obs: &Observation) -> Vec<f64> {
        obs.slice("qpos").expect("every layout has qpos").to_vec()
    }

    fn name(&self) -> String {
        "hold".into()
    }
}

/// Commands the pose goal read back from the observation (Pose and Stand);
/// holds still on tasks without a joint-space goal.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoalPolicy;

impl Policy for GoalPolicy {
    fn act(&self, _: usize, obs: &Observation) -> Vec<f64> {
        let q = obs.slice("qpos").expect("every layout has qpos");
        match obs.slice("qpos_error").or_else(|| obs.slice("pose_error")) {
            Some(e) => q.iter().zip(e).map(|(q, e)| q + e).collect(),
            None => q.to_vec(),
        }
    }

    fn name(&self) -> String {
        "goal".into()
    }
}

/// Replays a fixed action sequence, repeating the last entry.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub actions: Vec<Vec<f64>>,
}

impl Policy for ScriptedPolicy {
    fn act(&self, t: usize, _: &Observation) -> Vec<f64> {
        let i = t.min(self.actions.len().saturating_sub(1));
        self.actions.get(i).cloned().unwrap_or_default()
    }

    fn name(&self) -> String {
        "scripted".into()
    }
}

/// Wraps a closure.
pub struct FnPolicy<F>(pub F);

impl<F: Fn(usize, &Observation) -> Vec<f64> + Send + Sync> Policy for FnPolicy<F> {
    fn act(&self, t: usize, obs: &Observation) -> Vec<f64> {
        (self.0)(t, obs)
    }
}
