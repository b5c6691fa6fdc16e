//! Hardware-safety counters: joints near their position bounds, joints over
//! their speed limit, joints over their current limit.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Distance to a bound that counts as "near", rad.
    pub epsilon: f64,
    /// Per-joint speed limit, rad/s.
    pub speed: Vec<f64>,
    /// Per-joint current limit, A.
    pub current: Vec<f64>,
}

impl SafetyLimits {
    pub fn uniform(lower: &[f64], upper: &[f64], epsilon: f64, speed: f64, current: f64) -> Result<Self, ConfigError> {
        let n = lower.len();
        let limits = SafetyLimits {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            epsilon,
            speed: vec![speed; n],
            current: vec![current; n],
        };
        limits.validate()?;
        Ok(limits)
    }

    pub fn joint_count(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.lower.len();
        if n == 0 || self.upper.len() != n || self.speed.len() != n || self.current.len() != n {
            return Err(ConfigError::Invalid("safety limit vectors must share one non-zero length".into()));
        }
        if let Some(i) = (0..n).find(|&i| !(self.lower[i] < self.upper[i])) {
            return Err(ConfigError::Invalid(format!("joint {i}: lower bound must be below upper bound")));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.epsilon) {
            return Err(ConfigError::Invalid("position proximity epsilon must be positive".into()));
        }
        if !self.speed.iter().chain(&self.current).all(|&v| positive(v)) {
            return Err(ConfigError::Invalid("speed and current limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub position: u64,
    pub velocity: u64,
    pub current: u64,
}

impl ViolationCounts {
    pub fn total(&self) -> u64 {
        self.position + self.velocity + self.current
    }

    pub fn is_zero(&self) -> bool {
        self.total() == 0
    }
}

impl Add for ViolationCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ViolationCounts {
            position: self.position + o.position,
            velocity: self.velocity + o.velocity,
            current: self.current + o.current,
        }
    }
}

impl AddAssign for ViolationCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for ViolationCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub fn position_violations(theta: &[f64], limits: &SafetyLimits) -> u64 {
    theta
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            u64::from((q - limits.lower[i]).abs() < limits.epsilon)
                + u64::from((q - limits.upper[i]).abs() < limits.epsilon)
        })
        .sum()
}

pub fn velocity_violations(theta_dot: &[f64], limits: &SafetyLimits) -> u64 {
    theta_dot.iter().zip(&limits.speed).filter(|(v, a)| v.abs() > **a).count() as u64
}

pub fn current_violations(currents: &[f64], limits: &SafetyLimits) -> u64 {
    currents.iter().zip(&limits.current).filter(|(k, g)| k.abs() > **g).count() as u64
}

pub fn step_violations(theta: &[f64], theta_dot: &[f64], currents: &[f64], limits: &SafetyLimits) -> ViolationCounts {
    ViolationCounts {
        position: position_violations(theta, limits),
        velocity: velocity_violations(theta_dot, limits),
        current: current_violations(currents, limits),
    }
}

/// Episode-level safety numbers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SafetySummary {
    /// Violating-joint counts summed over every step.
    pub totals: ViolationCounts,
    pub steps: u64,
    /// `totals` divided by `steps`: violating joints per step.
    pub per_step: [f64; 3],
}

impl SafetySummary {
    pub fn from_steps(steps: impl IntoIterator<Item = ViolationCounts>) -> Self {
        let mut totals = ViolationCounts::default();
        let mut n = 0u64;
        for c in steps {
            totals += c;
            n += 1;
        }
        let per = |v: u64| if n == 0 { 0.0 } else { v as f64 / n as f64 };
        SafetySummary {
            totals,
            steps: n,
            per_step: [per(totals.position), per(totals.velocity), per(totals.current)],
        }
    }
}

/// Recounts every step of a log from its recorded joint state and the
/// limits in its header.
pub fn aggregate(log: &crate::log::EpisodeLog) -> SafetySummary {
    let l = &log.meta.limits;
    SafetySummary::from_steps(
        log.records.iter().map(|r| step_violations(&r.joints.position, &r.joints.velocity, &r.joints.current, l)),
    )
}
