//! Forward kinematics for the claw fingers and the quadruped legs, plus the
//! rigid point-set fit used by the quasi-static base model.
//!
//! Frames: z up. The claw's three fingers hang down from a ring around the
//! valve axis. The quadruped torso frame has x to the right, y forward
//! (the facing direction) and z up.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClawGeometry {
    /// Radius of the finger mount ring, m.
    pub mount_radius: f64,
    /// Base joint to middle joint, m.
    pub proximal: f64,
    /// Middle joint to fingertip, m.
    pub distal: f64,
}

impl Default for ClawGeometry {
    fn default() -> Self {
        ClawGeometry { mount_radius: 0.07, proximal: 0.068, distal: 0.068 }
    }
}

/// Planar placement of the claw relative to the object axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClawPlacement {
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
}

/// Fingertip positions for the 9 claw joints, ordered finger by finger as
/// (abduction, proximal flex, distal flex).
///
/// Abduction swings the finger tangentially; positive flex curls the tip
/// toward the axis.
pub fn fingertips(geom: &ClawGeometry, place: &ClawPlacement, theta: &[f64]) -> [Vec3; 3] {
    debug_assert_eq!(theta.len(), 9);
    let mut tips = [Vec3::zeros(); 3];
    for (f, tip) in tips.iter_mut().enumerate() {
        let q = &theta[3 * f..3 * f + 3];
        let phi = place.dyaw + f as f64 * 2.0 * std::f64::consts::PI / 3.0;
        let radial = Vec3::new(phi.cos(), phi.sin(), 0.0);
        let tangential = Vec3::new(-phi.sin(), phi.cos(), 0.0);
        // flex chain in the radial/vertical plane
        let r = -geom.proximal * q[1].sin() - geom.distal * (q[1] + q[2]).sin();
        let z = -geom.proximal * q[1].cos() - geom.distal * (q[1] + q[2]).cos();
        // abduction rotates that plane about the radial axis
        let t = -z * q[0].sin();
        let z = z * q[0].cos();
        let mount = radial * geom.mount_radius + Vec3::new(place.dx, place.dy, 0.0);
        *tip = mount + tangential * t + radial * r + Vec3::new(0.0, 0.0, z);
    }
    tips
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KittyGeometry {
    /// Lateral hip offset from the torso center, m.
    pub hip_x: f64,
    /// Fore/aft hip offset, m.
    pub hip_y: f64,
    pub thigh: f64,
    pub shin: f64,
}

impl Default for KittyGeometry {
    fn default() -> Self {
        KittyGeometry { hip_x: 0.09, hip_y: 0.12, thigh: 0.1, shin: 0.1 }
    }
}

impl KittyGeometry {
    /// Hip positions in the torso frame: front-right, front-left,
    /// back-left, back-right.
    pub fn hips(&self) -> [Vec3; 4] {
        let (x, y) = (self.hip_x, self.hip_y);
        [Vec3::new(x, y, 0.0), Vec3::new(-x, y, 0.0), Vec3::new(-x, -y, 0.0), Vec3::new(x, -y, 0.0)]
    }
}

/// Foot positions in the torso frame for the 12 leg joints, leg by leg as
/// (abduction about y, hip pitch about x, knee pitch about x). All zeros
/// is legs straight down.
pub fn feet_in_body(geom: &KittyGeometry, theta: &[f64]) -> [Vec3; 4] {
    debug_assert_eq!(theta.len(), 12);
    let hips = geom.hips();
    let mut feet = [Vec3::zeros(); 4];
    for (leg, foot) in feet.iter_mut().enumerate() {
        let q = &theta[3 * leg..3 * leg + 3];
        let shin = Rotation3::from_axis_angle(&Vector3::x_axis(), q[2]) * Vec3::new(0.0, 0.0, -geom.shin);
        let leg_vec = Rotation3::from_axis_angle(&Vector3::y_axis(), q[0])
            * Rotation3::from_axis_angle(&Vector3::x_axis(), q[1])
            * (Vec3::new(0.0, 0.0, -geom.thigh) + shin);
        *foot = hips[leg] + leg_vec;
    }
    feet
}

/// Least-squares rigid transform taking `body` points onto `world` points:
/// minimizes the sum of |R b + p - w|^2. Needs at least three points that
/// are not collinear for a unique rotation.
pub fn fit_rigid(body: &[Vec3], world: &[Vec3]) -> (Rotation3<f64>, Vec3) {
    assert_eq!(body.len(), world.len());
    assert!(!body.is_empty());
    let n = body.len() as f64;
    let cb = body.iter().sum::<Vec3>() / n;
    let cw = world.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (b, w) in body.iter().zip(world) {
        h += (b - cb) * (w - cw).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let r = Rotation3::from_matrix_unchecked(v * fix * u.transpose());
    let p = cw - r * cb;
    (r, p)
}
