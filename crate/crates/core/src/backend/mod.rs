//! Robot backends: one interface over the built-in simulation and a servo
//! bus.

pub mod base_motion;
pub mod hardware;
pub mod sim;

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::error::{BackendError, UsageError};
use crate::tasks::dclaw::{DClawDynamicsParams, ObjectState};
use crate::tasks::dkitty::DKittyDynamicsParams;
use crate::variant::RobotKind;

pub use base_motion::{BaseMotionModel, BaseUpdate, QuasiStatic, Replay};
pub use hardware::{HardwareBackend, HardwareConfig, Pacing};
pub use sim::{SimBackend, SimConfig, SimJointParams, ValveParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Torque,
    Velocity,
    Position,
    ExtendedPosition,
    Current,
    Pwm,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    /// rad
    pub position: Vec<f64>,
    /// rad/s
    pub velocity: Vec<f64>,
    /// A
    pub current: Vec<f64>,
    /// degC, when the backend senses it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<Vec<f64>>,
    /// V, when the backend senses it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage: Option<Vec<f64>>,
}

/// Torso pose and twist in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "BasePoseRepr", from = "BasePoseRepr")]
pub struct BasePose {
    pub position: [f64; 3],
    pub rotation: Rotation3<f64>,
    pub velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
}

impl Default for BasePose {
    fn default() -> Self {
        BasePose {
            position: [0.0; 3],
            rotation: Rotation3::identity(),
            velocity: [0.0; 3],
            angular_velocity: [0.0; 3],
        }
    }
}

impl BasePose {
    pub fn at(position: [f64; 3], rotation: Rotation3<f64>) -> Self {
        BasePose { position, rotation, ..Default::default() }
    }
}

/// Rotation stored as 9 row-major entries.
#[derive(Serialize, Deserialize)]
struct BasePoseRepr {
    position: [f64; 3],
    rotation: [f64; 9],
    velocity: [f64; 3],
    angular_velocity: [f64; 3],
}

impl From<BasePose> for BasePoseRepr {
    fn from(p: BasePose) -> Self {
        let m = p.rotation.matrix();
        BasePoseRepr {
            position: p.position,
            rotation: std::array::from_fn(|k| m[(k / 3, k % 3)]),
            velocity: p.velocity,
            angular_velocity: p.angular_velocity,
        }
    }
}

impl From<BasePoseRepr> for BasePose {
    fn from(r: BasePoseRepr) -> Self {
        BasePose {
            position: r.position,
            rotation: Rotation3::from_matrix_unchecked(Matrix3::from_row_slice(&r.rotation)),
            velocity: r.velocity,
            angular_velocity: r.angular_velocity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub joints: JointState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<ObjectState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BasePose>,
    /// Set by base models that lost every foot contact.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub airborne: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "robot", rename_all = "snake_case")]
pub enum EpisodeDynamics {
    #[default]
    Nominal,
    DClaw(DClawDynamicsParams),
    DKitty(DKittyDynamicsParams),
}

/// Everything a backend needs to start an episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeInit {
    pub joint_positions: Vec<f64>,
    /// Present for tasks with a free object.
    pub object_angle: Option<f64>,
    /// Initial torso heading for legged robots, rad.
    pub base_yaw: f64,
    pub dynamics: EpisodeDynamics,
}

pub trait RobotBackend: Send {
    /// Short description recorded in logs.
    fn name(&self) -> String;
    fn robot(&self) -> RobotKind;
    fn modes(&self) -> &[ControlMode];
    /// Per-joint position bounds commands are clamped to.
    fn position_bounds(&self) -> (&[f64], &[f64]);
    fn reset(&mut self, init: &EpisodeInit) -> Result<RobotState, BackendError>;
    fn read_state(&mut self) -> Result<RobotState, BackendError>;
    /// Latches (sim) or sends (hardware) a command; returns the values
    /// actually used after clamping.
    fn write_command(&mut self, mode: ControlMode, values: &[f64]) -> Result<Vec<f64>, BackendError>;
    /// Lets `dt` seconds of motion happen and returns the new state.
    fn advance(&mut self, dt: f64) -> Result<RobotState, BackendError>;
}

impl<B: RobotBackend + ?Sized> RobotBackend for Box<B> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn robot(&self) -> RobotKind {
        (**self).robot()
    }
    fn modes(&self) -> &[ControlMode] {
        (**self).modes()
    }
    fn position_bounds(&self) -> (&[f64], &[f64]) {
        (**self).position_bounds()
    }
    fn reset(&mut self, init: &EpisodeInit) -> Result<RobotState, BackendError> {
        (**self).reset(init)
    }
    fn read_state(&mut self) -> Result<RobotState, BackendError> {
        (**self).read_state()
    }
    fn write_command(&mut self, mode: ControlMode, values: &[f64]) -> Result<Vec<f64>, BackendError> {
        (**self).write_command(mode, values)
    }
    fn advance(&mut self, dt: f64) -> Result<RobotState, BackendError> {
        (**self).advance(dt)
    }
}

/// Mode and length checks shared by backends.
pub(crate) fn check_command(modes: &[ControlMode], n: usize, mode: ControlMode, values: &[f64]) -> Result<(), UsageError> {
    if !modes.contains(&mode) {
        return Err(UsageError::Mode(mode));
    }
    if values.len() != n {
        return Err(UsageError::CommandLength { expected: n, got: values.len() });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(UsageError::NonFiniteAction(i));
    }
    Ok(())
}

pub fn clamp_to(values: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    values.iter().zip(lower.iter().zip(upper)).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
}
