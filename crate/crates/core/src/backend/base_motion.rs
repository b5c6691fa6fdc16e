//! Torso pose for legged robots.
//!
//! `QuasiStatic` ignores momentum entirely: feet in contact are pinned to
//! the ground and the torso is placed wherever best fits those pins given
//! the current leg kinematics. It is a stand-in for a physics engine, good
//! enough to exercise the task code, not to predict real gaits.

use nalgebra::{Rotation3, SymmetricEigen, Unit, Vector3};

use super::BasePose;
use crate::kinematics::{feet_in_body, fit_rigid, KittyGeometry, Vec3};
use crate::tasks::dkitty::HeightField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseUpdate {
    pub pose: BasePose,
    pub airborne: bool,
}

pub trait BaseMotionModel: Send {
    fn reset(&mut self, theta: &[f64], yaw: f64, ground: Option<&HeightField>) -> BasePose;
    fn update(&mut self, theta: &[f64], dt: f64) -> BaseUpdate;
}

/// Plays back a fixed pose sequence, one entry per call, holding the last.
#[derive(Debug, Clone)]
pub struct Replay {
    poses: Vec<BasePose>,
    index: usize,
}

impl Replay {
    pub fn new(poses: Vec<BasePose>) -> Self {
        assert!(!poses.is_empty(), "replay needs at least one pose");
        Replay { poses, index: 0 }
    }
}

impl BaseMotionModel for Replay {
    fn reset(&mut self, _: &[f64], _: f64, _: Option<&HeightField>) -> BasePose {
        self.index = 0;
        self.poses[0]
    }

    fn update(&mut self, _: &[f64], _: f64) -> BaseUpdate {
        self.index = (self.index + 1).min(self.poses.len() - 1);
        BaseUpdate { pose: self.poses[self.index], airborne: false }
    }
}

#[derive(Debug, Clone)]
pub struct QuasiStatic {
    geom: KittyGeometry,
    /// Feet closer than this to the ground count as touching, m.
    contact_tolerance: f64,
    ground: Option<HeightField>,
    anchors: [Option<Vec3>; 4],
    rotation: Rotation3<f64>,
    position: Vec3,
}

impl QuasiStatic {
    pub fn new(geom: KittyGeometry, contact_tolerance: f64) -> Self {
        QuasiStatic {
            geom,
            contact_tolerance,
            ground: None,
            anchors: [None; 4],
            rotation: Rotation3::identity(),
            position: Vec3::zeros(),
        }
    }

    pub fn anchored(&self) -> usize {
        self.anchors.iter().flatten().count()
    }

    fn ground_at(&self, x: f64, y: f64) -> f64 {
        self.ground.as_ref().map_or(0.0, |h| h.height_at(x, y))
    }

    fn clearance(&self, w: &Vec3) -> f64 {
        w.z - self.ground_at(w.x, w.y)
    }

    fn pin(&self, w: &Vec3) -> Vec3 {
        Vec3::new(w.x, w.y, self.ground_at(w.x, w.y))
    }

    fn fit(&self, body: &[Vec3; 4]) -> (Rotation3<f64>, Vec3) {
        let (b, w): (Vec<Vec3>, Vec<Vec3>) =
            body.iter().zip(&self.anchors).filter_map(|(b, a)| a.map(|a| (*b, a))).unzip();
        if b.len() >= 3 {
            return fit_rigid(&b, &w);
        }
        // too few contacts to constrain rotation: translate only
        let r = self.rotation;
        let p = b.iter().zip(&w).map(|(b, w)| w - r * b).sum::<Vec3>() / b.len() as f64;
        (r, p)
    }
}

impl Default for QuasiStatic {
    fn default() -> Self {
        QuasiStatic::new(KittyGeometry::default(), 0.005)
    }
}

/// Rotation taking the best-fit plane through the feet to horizontal.
fn leveling(feet: &[Vec3; 4]) -> Rotation3<f64> {
    let c = feet.iter().sum::<Vec3>() / 4.0;
    let cov = feet.iter().map(|f| (f - c) * (f - c).transpose()).sum::<nalgebra::Matrix3<f64>>();
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let mut n: Vec3 = eig.eigenvectors.column(k).into();
    // normal points from the feet toward the torso
    if n.dot(&(-c)) < 0.0 {
        n = -n;
    }
    Rotation3::rotation_between(&n, &Vector3::z()).unwrap_or_else(Rotation3::identity)
}

fn twist(prev: &(Rotation3<f64>, Vec3), next: &(Rotation3<f64>, Vec3), dt: f64) -> ([f64; 3], [f64; 3]) {
    let v = (next.1 - prev.1) / dt;
    let w = (next.0 * prev.0.inverse()).scaled_axis() / dt;
    ([v.x, v.y, v.z], [w.x, w.y, w.z])
}

impl BaseMotionModel for QuasiStatic {
    fn reset(&mut self, theta: &[f64], yaw: f64, ground: Option<&HeightField>) -> BasePose {
        self.ground = ground.cloned();
        let body = feet_in_body(&self.geom, theta);
        let yaw_rot = Rotation3::from_axis_angle(&Unit::new_unchecked(Vector3::z()), yaw);
        let r = yaw_rot * leveling(&body);
        let world: Vec<Vec3> = body.iter().map(|b| r * b).collect();
        let clear: Vec<f64> = world.iter().map(|w| self.clearance(w)).collect();
        let low = clear.iter().copied().fold(f64::INFINITY, f64::min);
        let p = Vec3::new(0.0, 0.0, -low);
        for i in 0..4 {
            self.anchors[i] = (clear[i] - low < self.contact_tolerance).then(|| self.pin(&(world[i] + p)));
        }
        self.rotation = r;
        self.position = p;
        BasePose::at([p.x, p.y, p.z], r)
    }

    fn update(&mut self, theta: &[f64], dt: f64) -> BaseUpdate {
        let body = feet_in_body(&self.geom, theta);
        let prev = (self.rotation, self.position);
        let mut pose = prev;
        let mut airborne = false;
        for _ in 0..4 {
            if self.anchored() == 0 {
                airborne = true;
            } else {
                pose = self.fit(&body);
                airborne = false;
            }
            let world: Vec<Vec3> = body.iter().map(|b| pose.0 * b + pose.1).collect();
            let clear: Vec<f64> = world.iter().map(|w| self.clearance(w)).collect();
            let keep = (0..4)
                .filter(|&i| self.anchors[i].is_some())
                .min_by(|&a, &b| clear[a].total_cmp(&clear[b]));
            let mut changed = false;
            for i in 0..4 {
                let touching = clear[i] < self.contact_tolerance;
                match self.anchors[i] {
                    Some(_) if !touching && Some(i) != keep => {
                        self.anchors[i] = None;
                        changed = true;
                    }
                    None if touching => {
                        self.anchors[i] = Some(self.pin(&world[i]));
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        self.rotation = pose.0;
        self.position = pose.1;
        let (velocity, angular_velocity) = twist(&prev, &pose, dt);
        let p = pose.1;
        BaseUpdate {
            pose: BasePose { position: [p.x, p.y, p.z], rotation: pose.0, velocity, angular_velocity },
            airborne,
        }
    }
}
