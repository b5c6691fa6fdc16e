//! Reward and safety formulas written out longhand, sharing no code with the
//! library, for cross-checking it.

use std::f64::consts::PI;

pub const DEG: f64 = PI / 180.0;

/// Relative 1e-9, with an absolute floor for values near zero.
pub fn close(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= (1e-9 * scale).max(1e-12)
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn l2(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x * x;
    }
    s.sqrt()
}

fn minus(a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.len()).map(|i| a[i] - b[i]).collect()
}

fn mean_abs(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).abs();
    }
    s / a.len() as f64
}

pub fn pose_reward(theta: &[f64], theta_dot: &[f64], goal: &[f64]) -> f64 {
    let masked: Vec<f64> = theta_dot.iter().map(|&v| v * ind(v.abs() > 0.5)).collect();
    -l2(&minus(goal, theta)) - 0.1 * l2(&masked)
}

pub fn turn_reward(theta: &[f64], theta_dot: &[f64], nominal: &[f64], delta: f64) -> f64 {
    let d = delta.abs();
    -5.0 * d - l2(&minus(nominal, theta)) - l2(theta_dot) + 10.0 * ind(d < 0.25) + 50.0 * ind(d < 0.1)
}

pub type Mat = [[f64; 3]; 3];

/// Rotation matrix of the quaternion (w, x, y, z), normalized first.
pub fn quat_matrix(q: [f64; 4]) -> Mat {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Quaternion for a rotation of `angle` about the unit `axis`.
pub fn axis_angle(axis: [f64; 3], angle: f64) -> [f64; 4] {
    let (s, c) = (0.5 * angle).sin_cos();
    [c, axis[0] * s, axis[1] * s, axis[2] * s]
}

pub fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct Upright {
    pub alpha_upright: f64,
    pub alpha_falling: f64,
    pub beta: f64,
}

pub fn stand_params() -> Upright {
    Upright { alpha_upright: 2.0, alpha_falling: -100.0, beta: 0.0 }
}

pub fn orient_params() -> Upright {
    Upright { alpha_upright: 2.0, alpha_falling: -500.0, beta: (25.0 * DEG).cos() }
}

pub fn walk_params() -> Upright {
    Upright { alpha_upright: 1.0, alpha_falling: -500.0, beta: (25.0 * DEG).cos() }
}

/// World-vertical component of the torso z-axis.
pub fn uprightness(m: &Mat) -> f64 {
    m[2][2]
}

pub fn upright_reward(u: f64, p: Upright) -> f64 {
    p.alpha_upright * (u - p.beta) / (1.0 - p.beta) + p.alpha_falling * ind(u < p.beta)
}

pub fn stand_reward(m: &Mat, pos: [f64; 3], theta: &[f64], goal: &[f64]) -> f64 {
    let u = uprightness(m);
    let e = mean_abs(goal, theta);
    upright_reward(u, stand_params()) - 4.0 * e - 2.0 * pos[0].hypot(pos[1])
        + 5.0 * u * ind(e < PI / 6.0)
        + 10.0 * u * ind(e < PI / 12.0)
}

/// Horizontal part of the torso y-axis, normalized; `None` when vertical.
pub fn facing(m: &Mat) -> Option<[f64; 2]> {
    let (x, y) = (m[0][1], m[1][1]);
    let n = (x * x + y * y).sqrt();
    if n > 1e-9 {
        Some([x / n, y / n])
    } else {
        None
    }
}

/// Angle between unit vectors by the half-angle identity.
pub fn angle_between(a: [f64; 2], b: [f64; 2]) -> f64 {
    let diff = (a[0] - b[0]).hypot(a[1] - b[1]);
    let sum = (a[0] + b[0]).hypot(a[1] + b[1]);
    2.0 * diff.atan2(sum)
}

pub fn facing_error(m: &Mat, goal: [f64; 2]) -> f64 {
    facing(m).map_or(PI, |f| angle_between(f, goal))
}

pub fn orient_reward(m: &Mat, pos: [f64; 3], goal: [f64; 2]) -> f64 {
    let u = uprightness(m);
    let e = facing_error(m, goal);
    let gate = (15.0 * DEG).cos();
    upright_reward(u, orient_params()) - 4.0 * e - 4.0 * pos[0].hypot(pos[1])
        + 5.0 * ind(e < 15.0 * DEG || u > gate)
        + 10.0 * ind(e < 5.0 * DEG && u > gate)
}

/// Distance to the goal and heading toward it.
pub fn heading(m: &Mat, pos: [f64; 3], goal: [f64; 2]) -> (f64, f64) {
    let off = [goal[0] - pos[0], goal[1] - pos[1]];
    let d = (off[0] * off[0] + off[1] * off[1]).sqrt();
    if d < 1e-6 {
        return (d, 1.0);
    }
    let h = (m[0][1] * off[0] + m[1][1] * off[1]) / d;
    (d, h.clamp(-1.0, 1.0))
}

pub fn walk_reward(m: &Mat, pos: [f64; 3], goal: [f64; 2]) -> f64 {
    let u = uprightness(m);
    let (d, h) = heading(m, pos, goal);
    let gate = (25.0 * DEG).cos();
    upright_reward(u, walk_params()) - 4.0 * d + 2.0 * h + 5.0 * ind(d < 0.5 || h > gate) + 10.0 * ind(d < 0.5 && h > gate)
}

pub fn position_count(theta: &[f64], lower: &[f64], upper: &[f64], eps: f64) -> u64 {
    let mut n = 0;
    for i in 0..theta.len() {
        if (theta[i] - lower[i]).abs() < eps {
            n += 1;
        }
        if (theta[i] - upper[i]).abs() < eps {
            n += 1;
        }
    }
    n
}

pub fn over_limit_count(values: &[f64], limits: &[f64]) -> u64 {
    let mut n = 0;
    for i in 0..values.len() {
        if values[i].abs() > limits[i] {
            n += 1;
        }
    }
    n
}
