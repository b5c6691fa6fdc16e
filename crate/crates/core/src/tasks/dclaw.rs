//! Claw tasks: Pose, Turn and Screw.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{diff_norm, mean_abs_error, norm, uniform, wrap_angle};
use crate::error::SuccessError;
use crate::kinematics::ClawPlacement;
use crate::observation::{Observation, ObservationBuilder};
use crate::variant::{TaskFamily, TaskLevel};

pub const JOINTS: usize = 9;
pub type Joints = [f64; JOINTS];

/// Per-finger bounds: abduction, proximal flex, distal flex.
pub const FINGER_LOWER: [f64; 3] = [-FRAC_PI_4, -FRAC_PI_3, -FRAC_PI_2];
pub const FINGER_UPPER: [f64; 3] = [FRAC_PI_4, FRAC_PI_2, FRAC_PI_2];

/// 10 degrees.
pub const POSE_SUCCESS_THRESHOLD: f64 = PI / 18.0;
pub const TURN_SUCCESS_THRESHOLD: f64 = 0.1;
pub const SCREW_SUCCESS_THRESHOLD: f64 = 0.1;
pub const VELOCITY_PENALTY_THRESHOLD: f64 = 0.5;
pub const BONUS_SMALL_RADIUS: f64 = 0.25;
pub const BONUS_BIG_RADIUS: f64 = 0.1;

fn per_finger(f: [f64; 3]) -> Joints {
    let mut out = [0.0; JOINTS];
    for (i, v) in out.iter_mut().enumerate() {
        *v = f[i % 3];
    }
    out
}

pub fn lower_bounds() -> Joints {
    per_finger(FINGER_LOWER)
}

pub fn upper_bounds() -> Joints {
    per_finger(FINGER_UPPER)
}

/// All joints at the middle of their range.
pub fn midpoint_pose() -> Joints {
    let (lo, hi) = (lower_bounds(), upper_bounds());
    std::array::from_fn(|i| 0.5 * (lo[i] + hi[i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DClawJointState {
    pub theta: Joints,
    pub theta_dot: Joints,
    pub last_action: Joints,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectState {
    /// Accumulated (unwrapped) angle, rad.
    pub angle: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum PoseGoal {
    Constant { theta: Joints },
    /// Sinusoid centered between `g1` and `g2`; reaches `g2` a quarter
    /// period in.
    Oscillating { g1: Joints, g2: Joints, period: f64 },
}

impl PoseGoal {
    pub fn at(&self, t: usize, dt: f64) -> Joints {
        match *self {
            PoseGoal::Constant { theta } => theta,
            PoseGoal::Oscillating { g1, g2, period } => {
                let s = (2.0 * PI * t as f64 * dt / period).sin();
                std::array::from_fn(|i| 0.5 * (g1[i] + g2[i]) + 0.5 * (g2[i] - g1[i]) * s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnScrewGoal {
    /// Goal angle at reset; Screw advances it every step.
    pub theta_goal_obj: f64,
    /// Zero for Turn.
    pub desired_velocity: f64,
    pub nominal: Joints,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DClawGoal {
    Pose(PoseGoal),
    Object(TurnScrewGoal),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DClawDynamicsParams {
    pub claw_base_offset: ClawPlacement,
    pub object_scale: f64,
    /// Added to each joint's tracking time constant, s.
    pub joint_damping: Joints,
    /// Error deadband, rad.
    pub joint_friction_loss: Joints,
}

impl Default for DClawDynamicsParams {
    fn default() -> Self {
        DClawDynamicsParams {
            claw_base_offset: ClawPlacement::default(),
            object_scale: 1.0,
            joint_damping: [0.0; JOINTS],
            joint_friction_loss: [0.0; JOINTS],
        }
    }
}

/// Episode constants and sampling ranges. Angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DClawSettings {
    pub reset_pose: Joints,
    /// Posture regularizer target for Turn and Screw.
    pub nominal_pose: Joints,
    pub pose_fixed_goal: Joints,
    pub pose_period: f64,
    pub turn_fixed: (f64, f64),
    pub turn_initial_range: (f64, f64),
    pub turn_goal_range: (f64, f64),
    pub screw_fixed_velocity: f64,
    pub screw_initial_range: (f64, f64),
    pub screw_velocity_range: (f64, f64),
    pub object_scale_range: (f64, f64),
    pub base_offset_xy: f64,
    pub base_offset_yaw: f64,
    pub damping_range: (f64, f64),
    pub friction_loss_range: (f64, f64),
}

impl Default for DClawSettings {
    fn default() -> Self {
        DClawSettings {
            reset_pose: midpoint_pose(),
            nominal_pose: midpoint_pose(),
            pose_fixed_goal: per_finger([0.0, 0.6, -0.5]),
            pose_period: 4.0,
            turn_fixed: (0.0, PI),
            turn_initial_range: (-PI, PI),
            turn_goal_range: (-PI, PI),
            screw_fixed_velocity: 0.5,
            screw_initial_range: (-PI, PI),
            screw_velocity_range: (-0.75, 0.75),
            object_scale_range: (0.9, 1.1),
            base_offset_xy: 0.01,
            base_offset_yaw: 5f64.to_radians(),
            damping_range: (0.0, 0.05),
            friction_loss_range: (0.0, 0.01),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DClawEpisode {
    pub initial_theta: Joints,
    pub initial_object: Option<f64>,
    pub goal: DClawGoal,
    pub dynamics: DClawDynamicsParams,
}

pub fn pose_reward(state: &DClawJointState, goal: &Joints) -> f64 {
    let fast = state
        .theta_dot
        .iter()
        .map(|&v| if v.abs() > VELOCITY_PENALTY_THRESHOLD { v } else { 0.0 });
    -diff_norm(goal, &state.theta) - 0.1 * norm(fast)
}

/// Shared by Turn and Screw; `delta` is object angle minus goal angle.
pub fn turn_reward(state: &DClawJointState, delta: f64, nominal: &Joints) -> f64 {
    let d = delta.abs();
    let mut r = -5.0 * d - diff_norm(nominal, &state.theta) - norm(state.theta_dot.iter().copied());
    if d < BONUS_SMALL_RADIUS {
        r += 10.0;
    }
    if d < BONUS_BIG_RADIUS {
        r += 50.0;
    }
    r
}

/// Turn compares angles modulo a full revolution.
pub fn turn_error(object_angle: f64, goal: f64) -> f64 {
    wrap_angle(object_angle - goal)
}

/// Screw tracks multi-turn motion, so no wrapping.
pub fn screw_error(object_angle: f64, goal: f64) -> f64 {
    object_angle - goal
}

pub fn screw_goal_update(goal_prev: f64, desired_velocity: f64, dt: f64) -> f64 {
    goal_prev + desired_velocity * dt
}

pub fn pose_score(theta: &Joints, goal: &Joints) -> f64 {
    -mean_abs_error(goal, theta)
}

pub fn object_score(delta: f64) -> f64 {
    -delta.abs()
}

pub fn pose_observation(state: &DClawJointState, goal_now: &Joints) -> Observation {
    let err: Joints = std::array::from_fn(|i| goal_now[i] - state.theta[i]);
    ObservationBuilder::new(TaskFamily::DClawPose)
        .push("qpos", &state.theta)
        .push("qvel", &state.theta_dot)
        .push("qpos_error", &err)
        .push("last_action", &state.last_action)
        .finish()
}

pub fn object_observation(family: TaskFamily, state: &DClawJointState, object_angle: f64, delta: f64) -> Observation {
    ObservationBuilder::new(family)
        .push("qpos", &state.theta)
        .push("qvel", &state.theta_dot)
        .push("object_sin_cos", &[object_angle.sin(), object_angle.cos()])
        .push("object_error", &[delta])
        .finish()
}

/// Per-step mean absolute joint errors, averaged over the episode.
pub fn pose_success(step_errors: &[f64]) -> Result<bool, SuccessError> {
    if step_errors.is_empty() {
        return Err(SuccessError::EmptyLog);
    }
    let avg = step_errors.iter().sum::<f64>() / step_errors.len() as f64;
    Ok(avg < POSE_SUCCESS_THRESHOLD)
}

pub fn turn_success(final_delta: f64) -> bool {
    final_delta.abs() < TURN_SUCCESS_THRESHOLD
}

pub fn screw_success(deltas: &[f64]) -> Result<bool, SuccessError> {
    if deltas.is_empty() {
        return Err(SuccessError::EmptyLog);
    }
    let avg = deltas.iter().map(|d| d.abs()).sum::<f64>() / deltas.len() as f64;
    Ok(avg < SCREW_SUCCESS_THRESHOLD)
}

fn uniform_joints(rng: &mut impl Rng, lo: &Joints, hi: &Joints) -> Joints {
    std::array::from_fn(|i| uniform(rng, (lo[i], hi[i])))
}

fn sample_dynamics(rng: &mut impl Rng, s: &DClawSettings, with_object: bool) -> DClawDynamicsParams {
    let joint_damping = std::array::from_fn(|_| uniform(rng, s.damping_range));
    let joint_friction_loss = std::array::from_fn(|_| uniform(rng, s.friction_loss_range));
    if !with_object {
        return DClawDynamicsParams { joint_damping, joint_friction_loss, ..Default::default() };
    }
    let object_scale = uniform(rng, s.object_scale_range);
    let xy = s.base_offset_xy;
    let claw_base_offset = ClawPlacement {
        dx: uniform(rng, (-xy, xy)),
        dy: uniform(rng, (-xy, xy)),
        dyaw: uniform(rng, (-s.base_offset_yaw, s.base_offset_yaw)),
    };
    DClawDynamicsParams { claw_base_offset, object_scale, joint_damping, joint_friction_loss }
}

/// Draws one episode's parameters. Draw order is fixed: goals first, then
/// dynamics, so Random and RandomDynamics share goals for the same stream.
pub fn sample_episode(family: TaskFamily, level: TaskLevel, s: &DClawSettings, rng: &mut impl Rng) -> DClawEpisode {
    let random = level.randomizes_goals();
    let (initial_object, goal) = match family {
        TaskFamily::DClawPose => {
            let goal = if random {
                let (lo, hi) = (lower_bounds(), upper_bounds());
                let g1 = uniform_joints(rng, &lo, &hi);
                let g2 = uniform_joints(rng, &lo, &hi);
                PoseGoal::Oscillating { g1, g2, period: s.pose_period }
            } else {
                PoseGoal::Constant { theta: s.pose_fixed_goal }
            };
            (None, DClawGoal::Pose(goal))
        }
        TaskFamily::DClawTurn => {
            let (init, goal) = if random {
                (uniform(rng, s.turn_initial_range), uniform(rng, s.turn_goal_range))
            } else {
                s.turn_fixed
            };
            let g = TurnScrewGoal { theta_goal_obj: goal, desired_velocity: 0.0, nominal: s.nominal_pose };
            (Some(init), DClawGoal::Object(g))
        }
        TaskFamily::DClawScrew => {
            let (init, vel) = if random {
                (uniform(rng, s.screw_initial_range), uniform(rng, s.screw_velocity_range))
            } else {
                (0.0, s.screw_fixed_velocity)
            };
            let g = TurnScrewGoal { theta_goal_obj: init, desired_velocity: vel, nominal: s.nominal_pose };
            (Some(init), DClawGoal::Object(g))
        }
        other => panic!("{other:?} is not a claw task"),
    };
    let dynamics = if level.randomizes_dynamics() {
        sample_dynamics(rng, s, family != TaskFamily::DClawPose)
    } else {
        DClawDynamicsParams::default()
    };
    DClawEpisode { initial_theta: s.reset_pose, initial_object, goal, dynamics }
}
