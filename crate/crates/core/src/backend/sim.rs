//! Deterministic simulated robot.
//!
//! Joints track their position command as first-order lags with a velocity
//! cap; no contact dynamics. The valve for Turn/Screw is driven by a
//! fingertip-proximity surrogate, and legged torso motion comes from a
//! pluggable base model.

use serde::{Deserialize, Serialize};

use super::base_motion::{BaseMotionModel, QuasiStatic};
use super::{check_command, clamp_to, BasePose, ControlMode, EpisodeDynamics, EpisodeInit, JointState, RobotBackend, RobotState};
use crate::error::{BackendError, ConfigError};
use crate::kinematics::{fingertips, ClawGeometry, ClawPlacement, KittyGeometry, Vec3};
use crate::tasks::dclaw::{self, ObjectState};
use crate::tasks::dkitty;
use crate::variant::RobotKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimJointParams {
    /// Tracking time constant, s.
    pub tau: Vec<f64>,
    pub velocity_cap: Vec<f64>,
    /// Current proxy per rad of tracking error, A/rad.
    pub current_gain: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Extra lag added to `tau`, s.
    pub damping: Vec<f64>,
    /// Tracking-error deadband, rad.
    pub friction_loss: Vec<f64>,
    /// Position-loop gain multiplier; `tau` is divided by it.
    pub gain: Vec<f64>,
    /// Scales the current proxy.
    pub load: Vec<f64>,
}

impl SimJointParams {
    pub fn new(lower: &[f64], upper: &[f64]) -> Self {
        let n = lower.len();
        SimJointParams {
            tau: vec![0.15; n],
            velocity_cap: vec![8.06; n],
            current_gain: vec![2.0; n],
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            damping: vec![0.0; n],
            friction_loss: vec![0.0; n],
            gain: vec![1.0; n],
            load: vec![1.0; n],
        }
    }

    pub fn for_robot(robot: RobotKind) -> Self {
        match robot {
            RobotKind::DClaw => Self::new(&dclaw::lower_bounds(), &dclaw::upper_bounds()),
            RobotKind::DKitty => Self::new(&dkitty::lower_bounds(), &dkitty::upper_bounds()),
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.len();
        let vecs = [
            &self.tau,
            &self.velocity_cap,
            &self.current_gain,
            &self.upper,
            &self.damping,
            &self.friction_loss,
            &self.gain,
            &self.load,
        ];
        if n == 0 || vecs.iter().any(|v| v.len() != n) {
            return Err(ConfigError::Invalid("sim joint parameter vectors must share one length".into()));
        }
        let pos = |v: &Vec<f64>| v.iter().all(|&x| x > 0.0 && x.is_finite());
        if !pos(&self.tau) || !pos(&self.velocity_cap) || !pos(&self.gain) {
            return Err(ConfigError::Invalid("tau, velocity caps and gains must be positive".into()));
        }
        if (0..n).any(|i| !(self.lower[i] < self.upper[i])) {
            return Err(ConfigError::Invalid("sim joint bounds must satisfy lower < upper".into()));
        }
        Ok(())
    }

    /// One joint update: returns (position, velocity, current).
    pub fn step_joint(&self, i: usize, theta: f64, cmd: f64, dt: f64) -> (f64, f64, f64) {
        let e = cmd - theta;
        let e = e.signum() * (e.abs() - self.friction_loss[i]).max(0.0);
        let tau = self.tau[i] / self.gain[i] + self.damping[i];
        let cap = self.velocity_cap[i];
        let v = (e / tau.max(dt)).clamp(-cap, cap);
        let next = (theta + v * dt).clamp(self.lower[i], self.upper[i]);
        let current = self.current_gain[i] * self.load[i] * (cmd - next).abs();
        (next, v, current)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValveParams {
    /// kg m^2
    pub inertia: f64,
    /// Viscous friction, N m s.
    pub friction: f64,
    /// Torque per m/s of tangential fingertip motion at full proximity.
    pub coupling: f64,
    /// Handle radius at scale 1, m.
    pub radius: f64,
    /// Height of the handle top in the claw frame, m.
    pub top: f64,
    /// Fingertips farther than this from the handle exert nothing, m.
    pub contact_distance: f64,
}

impl Default for ValveParams {
    fn default() -> Self {
        ValveParams { inertia: 0.002, friction: 0.01, coupling: 0.05, radius: 0.06, top: -0.13, contact_distance: 0.02 }
    }
}

impl ValveParams {
    /// Distance from a fingertip to the handle, treated as a solid cylinder
    /// extending down from `top`.
    pub fn gap(&self, scale: f64, tip: &Vec3) -> f64 {
        let rho = tip.x.hypot(tip.y);
        let dr = (rho - self.radius * scale).max(0.0);
        let dz = (tip.z - self.top).max(0.0);
        dr.hypot(dz)
    }

    pub fn proximity(&self, scale: f64, tip: &Vec3) -> f64 {
        (1.0 - self.gap(scale, tip) / self.contact_distance).max(0.0)
    }

    /// Coupling torque from fingertips moving from `before` to `after`.
    pub fn torque(&self, scale: f64, before: &[Vec3; 3], after: &[Vec3; 3], dt: f64) -> f64 {
        let mut sum = 0.0;
        for (b, a) in before.iter().zip(after) {
            let rho = a.x.hypot(a.y);
            if rho < 1e-12 {
                continue;
            }
            let tangent = Vec3::new(-a.y / rho, a.x / rho, 0.0);
            sum += self.proximity(scale, a) * ((a - b) / dt).dot(&tangent);
        }
        self.coupling * sum
    }

    /// Implicit viscous update of the angular velocity.
    pub fn spin(&self, omega: f64, torque: f64, dt: f64) -> f64 {
        (self.inertia * omega + dt * torque) / (self.inertia + self.friction * dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Overrides the robot's default joint model when present.
    pub joints: Option<SimJointParams>,
    pub valve: ValveParams,
    pub claw: ClawGeometry,
    pub kitty: KittyGeometry,
    pub contact_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            joints: None,
            valve: ValveParams::default(),
            claw: ClawGeometry::default(),
            kitty: KittyGeometry::default(),
            contact_tolerance: 0.005,
        }
    }
}

pub struct SimBackend {
    robot: RobotKind,
    config: SimConfig,
    nominal: SimJointParams,
    joints: SimJointParams,
    modes: Vec<ControlMode>,
    theta: Vec<f64>,
    theta_dot: Vec<f64>,
    current: Vec<f64>,
    command: Vec<f64>,
    object: Option<ObjectState>,
    object_scale: f64,
    placement: ClawPlacement,
    base_model: Option<Box<dyn BaseMotionModel>>,
    base: Option<BasePose>,
    airborne: bool,
}

impl SimBackend {
    pub fn new(robot: RobotKind) -> Self {
        Self::with_config(robot, SimConfig::default()).expect("default sim config is valid")
    }

    pub fn with_config(robot: RobotKind, config: SimConfig) -> Result<Self, ConfigError> {
        let nominal = config.joints.clone().unwrap_or_else(|| SimJointParams::for_robot(robot));
        nominal.validate()?;
        if nominal.len() != robot.joint_count() {
            return Err(ConfigError::Invalid(format!(
                "{robot:?} has {} joints, sim parameters describe {}",
                robot.joint_count(),
                nominal.len()
            )));
        }
        let base_model: Option<Box<dyn BaseMotionModel>> = match robot {
            RobotKind::DKitty => Some(Box::new(QuasiStatic::new(config.kitty, config.contact_tolerance))),
            RobotKind::DClaw => None,
        };
        let n = nominal.len();
        let rest: Vec<f64> = (0..n).map(|i| 0.5 * (nominal.lower[i] + nominal.upper[i])).collect();
        Ok(SimBackend {
            robot,
            config,
            joints: nominal.clone(),
            nominal,
            modes: vec![ControlMode::Position],
            theta: rest.clone(),
            theta_dot: vec![0.0; n],
            current: vec![0.0; n],
            command: rest,
            object: None,
            object_scale: 1.0,
            placement: ClawPlacement::default(),
            base_model,
            base: None,
            airborne: false,
        })
    }

    /// Replaces the torso model (legged robots only).
    pub fn with_base_model(mut self, model: Box<dyn BaseMotionModel>) -> Self {
        self.base_model = Some(model);
        self
    }

    pub fn joint_params(&self) -> &SimJointParams {
        &self.joints
    }

    fn state(&self) -> RobotState {
        RobotState {
            joints: JointState {
                position: self.theta.clone(),
                velocity: self.theta_dot.clone(),
                current: self.current.clone(),
                temperature: None,
                voltage: None,
            },
            object: self.object,
            base: self.base,
            airborne: self.airborne,
        }
    }

    fn tips(&self, theta: &[f64]) -> [Vec3; 3] {
        fingertips(&self.config.claw, &self.placement, theta)
    }

    fn apply_dynamics(&mut self, d: &EpisodeDynamics) -> Result<(), ConfigError> {
        self.joints = self.nominal.clone();
        self.object_scale = 1.0;
        self.placement = ClawPlacement::default();
        match (d, self.robot) {
            (EpisodeDynamics::Nominal, _) => {}
            (EpisodeDynamics::DClaw(p), RobotKind::DClaw) => {
                self.joints.damping = p.joint_damping.to_vec();
                self.joints.friction_loss = p.joint_friction_loss.to_vec();
                self.object_scale = p.object_scale;
                self.placement = p.claw_base_offset;
            }
            (EpisodeDynamics::DKitty(p), RobotKind::DKitty) => {
                self.joints.damping = p.joint_damping.to_vec();
                self.joints.friction_loss = p.friction_loss.to_vec();
                self.joints.gain = p.joint_gains.to_vec();
                if p.masses.len() == 5 {
                    self.joints.load = (0..12).map(|i| p.masses[1 + i / 3]).collect();
                }
            }
            _ => return Err(ConfigError::Invalid("episode dynamics do not match the simulated robot".into())),
        }
        Ok(())
    }
}

impl RobotBackend for SimBackend {
    fn name(&self) -> String {
        format!("sim/{:?}", self.robot)
    }

    fn robot(&self) -> RobotKind {
        self.robot
    }

    fn modes(&self) -> &[ControlMode] {
        &self.modes
    }

    fn position_bounds(&self) -> (&[f64], &[f64]) {
        (&self.joints.lower, &self.joints.upper)
    }

    fn reset(&mut self, init: &EpisodeInit) -> Result<RobotState, BackendError> {
        let n = self.joints.len();
        if init.joint_positions.len() != n {
            return Err(ConfigError::Invalid(format!("initial pose has {} joints, expected {n}", init.joint_positions.len())).into());
        }
        self.apply_dynamics(&init.dynamics)?;
        self.theta = clamp_to(&init.joint_positions, &self.joints.lower, &self.joints.upper);
        self.command = self.theta.clone();
        self.theta_dot = vec![0.0; n];
        self.current = vec![0.0; n];
        self.object = init.object_angle.map(|angle| ObjectState { angle, velocity: 0.0 });
        self.airborne = false;
        let ground = match &init.dynamics {
            EpisodeDynamics::DKitty(p) => p.height_field.as_ref(),
            _ => None,
        };
        self.base = self.base_model.as_mut().map(|m| m.reset(&self.theta, init.base_yaw, ground));
        Ok(self.state())
    }

    fn read_state(&mut self) -> Result<RobotState, BackendError> {
        Ok(self.state())
    }

    fn write_command(&mut self, mode: ControlMode, values: &[f64]) -> Result<Vec<f64>, BackendError> {
        check_command(&self.modes, self.joints.len(), mode, values)?;
        self.command = clamp_to(values, &self.joints.lower, &self.joints.upper);
        Ok(self.command.clone())
    }

    fn advance(&mut self, dt: f64) -> Result<RobotState, BackendError> {
        let before = self.theta.clone();
        for i in 0..self.theta.len() {
            let (q, v, c) = self.joints.step_joint(i, self.theta[i], self.command[i], dt);
            self.theta[i] = q;
            self.theta_dot[i] = v;
            self.current[i] = c;
        }
        if let Some(obj) = self.object.as_mut() {
            let valve = self.config.valve;
            let a = fingertips(&self.config.claw, &self.placement, &before);
            let b = fingertips(&self.config.claw, &self.placement, &self.theta);
            let torque = valve.torque(self.object_scale, &a, &b, dt);
            obj.velocity = valve.spin(obj.velocity, torque, dt);
            obj.angle += obj.velocity * dt;
        }
        if let Some(model) = self.base_model.as_mut() {
            let u = model.update(&self.theta, dt);
            self.base = Some(u.pose);
            self.airborne = u.airborne;
        }
        Ok(self.state())
    }
}

impl SimBackend {
    /// Fingertip positions at the current pose, claw frame.
    pub fn fingertips(&self) -> Option<[Vec3; 3]> {
        (self.robot == RobotKind::DClaw).then(|| self.tips(&self.theta))
    }
}
