//! Quadruped tasks: Stand, Orient and Walk.

use std::f64::consts::PI;

use nalgebra::Rotation3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{mean_abs_error, uniform};
use crate::observation::{Observation, ObservationBuilder};
use crate::variant::{TaskFamily, TaskLevel};

pub const JOINTS: usize = 12;
pub type Joints = [f64; JOINTS];

/// Per-leg bounds: abduction, hip, knee.
pub const LEG_LOWER: [f64; 3] = [-0.5, -0.75, -2.0];
pub const LEG_UPPER: [f64; 3] = [0.5, 1.5, 0.0];
pub const STAND_LEG: [f64; 3] = [0.0, 0.5, -1.0];
pub const CROUCH_LEG: [f64; 3] = [0.0, 1.0, -1.8];

pub const STAND_SUCCESS_ERROR: f64 = PI / 12.0;
pub const STAND_SUCCESS_UPRIGHT: f64 = 0.9;
/// 5 degrees.
pub const ORIENT_SUCCESS_ERROR: f64 = PI / 36.0;
/// 15 degrees.
pub const ORIENT_BONUS_ANGLE: f64 = PI / 12.0;
pub const WALK_SUCCESS_DISTANCE: f64 = 0.5;
/// Below this distance the heading is taken as perfectly aligned.
pub const HEADING_EPS: f64 = 1e-6;

pub fn orient_upright_gate() -> f64 {
    ORIENT_BONUS_ANGLE.cos()
}

pub fn walk_gate() -> f64 {
    25f64.to_radians().cos()
}

fn per_leg(f: [f64; 3]) -> Joints {
    std::array::from_fn(|i| f[i % 3])
}

pub fn lower_bounds() -> Joints {
    per_leg(LEG_LOWER)
}

pub fn upper_bounds() -> Joints {
    per_leg(LEG_UPPER)
}

pub fn stand_pose() -> Joints {
    per_leg(STAND_LEG)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DKittyState {
    pub position: [f64; 3],
    pub rotation: Rotation3<f64>,
    pub velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
    pub theta: Joints,
    pub theta_dot: Joints,
    pub last_action: Joints,
}

impl DKittyState {
    pub fn upright(&self) -> f64 {
        uprightness(&self.rotation)
    }

    pub fn planar_distance(&self) -> f64 {
        self.position[0].hypot(self.position[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UprightParams {
    pub alpha_upright: f64,
    pub alpha_falling: f64,
    /// Cosine threshold below which the torso counts as fallen.
    pub beta: f64,
}

impl UprightParams {
    pub fn stand() -> Self {
        // cos(90 deg) evaluates to 6e-17 in floating point; the threshold is
        // meant to be exactly zero.
        UprightParams { alpha_upright: 2.0, alpha_falling: -100.0, beta: 0.0 }
    }

    pub fn orient() -> Self {
        UprightParams { alpha_upright: 2.0, alpha_falling: -500.0, beta: walk_gate() }
    }

    pub fn walk() -> Self {
        UprightParams { alpha_upright: 1.0, alpha_falling: -500.0, beta: walk_gate() }
    }

    pub fn for_family(family: TaskFamily) -> Self {
        match family {
            TaskFamily::DKittyStand => Self::stand(),
            TaskFamily::DKittyOrient => Self::orient(),
            TaskFamily::DKittyWalk => Self::walk(),
            other => panic!("{other:?} is not a quadruped task"),
        }
    }

    pub fn fallen(&self, u: f64) -> bool {
        u < self.beta
    }
}

/// Torso z-axis projected onto world vertical.
pub fn uprightness(r: &Rotation3<f64>) -> f64 {
    r[(2, 2)]
}

pub fn upright_reward(u: f64, p: &UprightParams) -> f64 {
    let mut r = p.alpha_upright * (u - p.beta) / (1.0 - p.beta);
    if u < p.beta {
        r += p.alpha_falling;
    }
    r
}

/// Torso y-axis flattened onto the ground plane, or `None` when it points
/// (nearly) straight up or down.
pub fn facing(r: &Rotation3<f64>) -> Option<[f64; 2]> {
    let (x, y) = (r[(0, 1)], r[(1, 1)]);
    let n = x.hypot(y);
    (n > 1e-9).then(|| [x / n, y / n])
}

/// Facing direction for a heading angle; 0 faces +y, positive turns left.
pub fn facing_from_angle(psi: f64) -> [f64; 2] {
    // + 0.0 turns -0.0 into 0.0 so logs read cleanly
    [-psi.sin() + 0.0, psi.cos()]
}

/// Unsigned angle between current and goal facing, in [0, pi]. A torso with
/// no horizontal facing is treated as maximally wrong.
pub fn facing_error(r: &Rotation3<f64>, goal: &[f64; 2]) -> f64 {
    match facing(r) {
        Some(f) => {
            let cross = f[0] * goal[1] - f[1] * goal[0];
            let dot = f[0] * goal[0] + f[1] * goal[1];
            cross.abs().atan2(dot)
        }
        None => PI,
    }
}

pub fn walk_heading(state: &DKittyState, goal: &[f64; 2]) -> (f64, f64) {
    let off = [goal[0] - state.position[0], goal[1] - state.position[1]];
    let d = off[0].hypot(off[1]);
    if d < HEADING_EPS {
        return (d, 1.0);
    }
    let r = &state.rotation;
    let h = (r[(0, 1)] * off[0] + r[(1, 1)] * off[1]) / d;
    (d, h.clamp(-1.0, 1.0))
}

pub fn stand_reward(state: &DKittyState, goal: &Joints) -> f64 {
    let u = state.upright();
    let e = mean_abs_error(goal, &state.theta);
    let mut r = upright_reward(u, &UprightParams::stand()) - 4.0 * e - 2.0 * state.planar_distance();
    if e < PI / 6.0 {
        r += 5.0 * u;
    }
    if e < PI / 12.0 {
        r += 10.0 * u;
    }
    r
}

pub fn orient_reward(state: &DKittyState, goal_facing: &[f64; 2]) -> f64 {
    let u = state.upright();
    let e = facing_error(&state.rotation, goal_facing);
    let gate = orient_upright_gate();
    let mut r = upright_reward(u, &UprightParams::orient()) - 4.0 * e - 4.0 * state.planar_distance();
    if e < ORIENT_BONUS_ANGLE || u > gate {
        r += 5.0;
    }
    if e < ORIENT_SUCCESS_ERROR && u > gate {
        r += 10.0;
    }
    r
}

pub fn walk_reward(state: &DKittyState, goal: &[f64; 2]) -> f64 {
    let u = state.upright();
    let (d, h) = walk_heading(state, goal);
    let gate = walk_gate();
    let mut r = upright_reward(u, &UprightParams::walk()) - 4.0 * d + 2.0 * h;
    if d < WALK_SUCCESS_DISTANCE || h > gate {
        r += 5.0;
    }
    if d < WALK_SUCCESS_DISTANCE && h > gate {
        r += 10.0;
    }
    r
}

pub fn stand_success(final_pose_error: f64, final_upright: f64) -> bool {
    final_pose_error < STAND_SUCCESS_ERROR && final_upright > STAND_SUCCESS_UPRIGHT
}

pub fn orient_success(final_facing_error: f64, final_upright: f64) -> bool {
    final_facing_error < ORIENT_SUCCESS_ERROR && final_upright > orient_upright_gate()
}

pub fn walk_success(final_distance: f64, final_upright: f64) -> bool {
    final_distance < WALK_SUCCESS_DISTANCE && final_upright > walk_gate()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DKittyGoal {
    Stand { theta_goal: Joints },
    /// Goal heading angle and the matching unit facing vector.
    Orient { angle: f64, facing: [f64; 2] },
    /// Target torso position on the ground plane, m.
    Walk { position: [f64; 2] },
}

impl DKittyGoal {
    /// Primary error term: mean pose error, facing error or goal distance.
    pub fn error(&self, state: &DKittyState) -> f64 {
        match self {
            DKittyGoal::Stand { theta_goal } => mean_abs_error(theta_goal, &state.theta),
            DKittyGoal::Orient { facing, .. } => facing_error(&state.rotation, facing),
            DKittyGoal::Walk { position } => walk_heading(state, position).0,
        }
    }

    pub fn reward(&self, state: &DKittyState) -> f64 {
        match self {
            DKittyGoal::Stand { theta_goal } => stand_reward(state, theta_goal),
            DKittyGoal::Orient { facing, .. } => orient_reward(state, facing),
            DKittyGoal::Walk { position } => walk_reward(state, position),
        }
    }

    pub fn score(&self, state: &DKittyState) -> f64 {
        -self.error(state)
    }

    pub fn success(&self, state: &DKittyState) -> bool {
        let u = state.upright();
        let e = self.error(state);
        match self {
            DKittyGoal::Stand { .. } => stand_success(e, u),
            DKittyGoal::Orient { .. } => orient_success(e, u),
            DKittyGoal::Walk { .. } => walk_success(e, u),
        }
    }

    pub fn family(&self) -> TaskFamily {
        match self {
            DKittyGoal::Stand { .. } => TaskFamily::DKittyStand,
            DKittyGoal::Orient { .. } => TaskFamily::DKittyOrient,
            DKittyGoal::Walk { .. } => TaskFamily::DKittyWalk,
        }
    }
}

/// Euler angles (extrinsic X, then Y, then Z) of the torso, rad.
pub fn euler_xyz(r: &Rotation3<f64>) -> [f64; 3] {
    let (roll, pitch, yaw) = r.euler_angles();
    [roll, pitch, yaw]
}

pub fn build_observation(state: &DKittyState, goal: &DKittyGoal) -> Observation {
    let b = ObservationBuilder::new(goal.family())
        .push("root_pos", &state.position)
        .push("root_euler", &euler_xyz(&state.rotation))
        .push("root_vel", &state.velocity)
        .push("root_angular_vel", &state.angular_velocity)
        .push("qpos", &state.theta)
        .push("qvel", &state.theta_dot)
        .push("last_action", &state.last_action)
        .push("upright", &[state.upright()]);
    match goal {
        DKittyGoal::Stand { theta_goal } => {
            let err: Joints = std::array::from_fn(|i| theta_goal[i] - state.theta[i]);
            b.push("pose_error", &err).finish()
        }
        DKittyGoal::Orient { facing: g, .. } => {
            let f = facing(&state.rotation).unwrap_or([0.0, 0.0]);
            b.push("current_facing", &f).push("goal_facing", g).finish()
        }
        DKittyGoal::Walk { position } => {
            let (_, h) = walk_heading(state, position);
            let off = [position[0] - state.position[0], position[1] - state.position[1]];
            b.push("heading", &[h]).push("target_offset", &off).finish()
        }
    }
}

/// Square terrain grid centered on the origin, heights bilinearly
/// interpolated between samples and held constant past the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    /// Samples per side.
    pub cells: usize,
    /// Side length, m.
    pub extent: f64,
    /// Row-major, rows along y.
    pub heights: Vec<f64>,
}

impl HeightField {
    pub fn flat(cells: usize, extent: f64) -> Self {
        HeightField { cells, extent, heights: vec![0.0; cells * cells] }
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let n = self.cells;
        if n == 0 {
            return 0.0;
        }
        if n == 1 {
            return self.heights[0];
        }
        let max = (n - 1) as f64;
        let grid = |v: f64| ((v / self.extent + 0.5) * max).clamp(0.0, max);
        let (gx, gy) = (grid(x), grid(y));
        let (i0, j0) = ((gx.floor() as usize).min(n - 2), (gy.floor() as usize).min(n - 2));
        let (fx, fy) = (gx - i0 as f64, gy - j0 as f64);
        let h = |i: usize, j: usize| self.heights[j * n + i];
        let a = h(i0, j0) * (1.0 - fx) + h(i0 + 1, j0) * fx;
        let b = h(i0, j0 + 1) * (1.0 - fx) + h(i0 + 1, j0 + 1) * fx;
        a * (1.0 - fy) + b * fy
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DKittyDynamicsParams {
    /// Position-loop gain multipliers; the tracking time constant divides by these.
    pub joint_gains: Joints,
    pub joint_damping: Joints,
    pub friction_loss: Joints,
    /// Torso then the four feet. Recorded for external simulators; the
    /// built-in quasi-static model has no friction.
    pub geom_friction: Vec<f64>,
    /// Torso then the four legs; leg scales multiply the current proxy.
    pub masses: Vec<f64>,
    /// `None` is flat ground.
    pub height_field: Option<HeightField>,
}

impl Default for DKittyDynamicsParams {
    fn default() -> Self {
        DKittyDynamicsParams {
            joint_gains: [1.0; JOINTS],
            joint_damping: [0.0; JOINTS],
            friction_loss: [0.0; JOINTS],
            geom_friction: vec![1.0; 5],
            masses: vec![1.0; 5],
            height_field: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DKittySettings {
    pub stand_goal: Joints,
    pub stand_fixed_initial: Joints,
    /// Random Stand starts within this fraction of each joint's half range
    /// around its midpoint.
    pub stand_initial_fraction: f64,
    /// Initial and goal heading, rad.
    pub orient_fixed: (f64, f64),
    pub orient_initial_range: (f64, f64),
    pub orient_goal_range: (f64, f64),
    /// Distance (m) and heading (rad) of the target.
    pub walk_fixed: (f64, f64),
    pub walk_distance_range: (f64, f64),
    pub walk_angle_range: (f64, f64),
    pub gain_range: (f64, f64),
    pub mass_range: (f64, f64),
    pub geom_friction_range: (f64, f64),
    pub damping_range: (f64, f64),
    pub friction_loss_range: (f64, f64),
    pub height_field_cells: usize,
    pub height_field_extent: f64,
    pub height_field_max: f64,
}

impl Default for DKittySettings {
    fn default() -> Self {
        let deg = f64::to_radians;
        DKittySettings {
            stand_goal: stand_pose(),
            stand_fixed_initial: per_leg(CROUCH_LEG),
            stand_initial_fraction: 0.5,
            orient_fixed: (0.0, PI),
            orient_initial_range: (deg(-60.0), deg(60.0)),
            orient_goal_range: (deg(120.0), deg(240.0)),
            walk_fixed: (2.0, 0.0),
            walk_distance_range: (1.0, 2.0),
            walk_angle_range: (deg(-60.0), deg(60.0)),
            gain_range: (0.8, 1.2),
            mass_range: (0.8, 1.2),
            geom_friction_range: (0.8, 1.2),
            damping_range: (0.0, 0.05),
            friction_loss_range: (0.0, 0.01),
            height_field_cells: 32,
            height_field_extent: 4.0,
            height_field_max: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DKittyEpisode {
    pub initial_theta: Joints,
    /// Initial heading of the torso, rad.
    pub initial_yaw: f64,
    pub goal: DKittyGoal,
    pub dynamics: DKittyDynamicsParams,
}

fn sample_dynamics(rng: &mut impl Rng, s: &DKittySettings) -> DKittyDynamicsParams {
    let joint_gains = std::array::from_fn(|_| uniform(rng, s.gain_range));
    let joint_damping = std::array::from_fn(|_| uniform(rng, s.damping_range));
    let friction_loss = std::array::from_fn(|_| uniform(rng, s.friction_loss_range));
    let geom_friction = (0..5).map(|_| uniform(rng, s.geom_friction_range)).collect();
    let masses = (0..5).map(|_| uniform(rng, s.mass_range)).collect();
    let n = s.height_field_cells;
    let heights = (0..n * n).map(|_| uniform(rng, (0.0, s.height_field_max))).collect();
    DKittyDynamicsParams {
        joint_gains,
        joint_damping,
        friction_loss,
        geom_friction,
        masses,
        height_field: Some(HeightField { cells: n, extent: s.height_field_extent, heights }),
    }
}

/// Draws one episode's parameters: initial pose and goal first, then
/// dynamics.
pub fn sample_episode(family: TaskFamily, level: TaskLevel, s: &DKittySettings, rng: &mut impl Rng) -> DKittyEpisode {
    let random = level.randomizes_goals();
    let (initial_theta, initial_yaw, goal) = match family {
        TaskFamily::DKittyStand => {
            let init = if random {
                let (lo, hi) = (lower_bounds(), upper_bounds());
                std::array::from_fn(|i| {
                    let mid = 0.5 * (lo[i] + hi[i]);
                    let half = 0.5 * (hi[i] - lo[i]) * s.stand_initial_fraction;
                    uniform(rng, (mid - half, mid + half))
                })
            } else {
                s.stand_fixed_initial
            };
            (init, 0.0, DKittyGoal::Stand { theta_goal: s.stand_goal })
        }
        TaskFamily::DKittyOrient => {
            let (init, goal) = if random {
                (uniform(rng, s.orient_initial_range), uniform(rng, s.orient_goal_range))
            } else {
                s.orient_fixed
            };
            (s.stand_goal, init, DKittyGoal::Orient { angle: goal, facing: facing_from_angle(goal) })
        }
        TaskFamily::DKittyWalk => {
            let (dist, angle) = if random {
                (uniform(rng, s.walk_distance_range), uniform(rng, s.walk_angle_range))
            } else {
                s.walk_fixed
            };
            let f = facing_from_angle(angle);
            (s.stand_goal, 0.0, DKittyGoal::Walk { position: [dist * f[0], dist * f[1]] })
        }
        other => panic!("{other:?} is not a quadruped task"),
    };
    let dynamics = if level.randomizes_dynamics() { sample_dynamics(rng, s) } else { DKittyDynamicsParams::default() };
    DKittyEpisode { initial_theta, initial_yaw, goal, dynamics }
}
