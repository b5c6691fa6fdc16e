//! Robot backend over a daisy-chained servo bus.
//!
//! Each step is one broadcast sync-write of goal registers followed by one
//! sync-read of the present current/velocity/position block.

use std::time::{Duration, Instant};

use rbench_dxl::{BusError, BusOptions, ControlTable, DynamixelBus, OperatingMode, Register, RegisterSpec, Transport, TransportError};
use serde::{Deserialize, Serialize};

use super::{check_command, clamp_to, ControlMode, EpisodeInit, JointState, RobotBackend, RobotState};
use crate::error::{BackendError, ConfigError};
use crate::tasks::dclaw::ObjectState;
use crate::tasks::{dclaw, dkitty, wrap_angle};
use crate::variant::RobotKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    /// Sleep so consecutive steps are `dt` apart in wall time.
    RealTime,
    /// Return immediately; for simulated buses.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub device: String,
    pub baud: u32,
    /// Servo ids in joint order.
    pub ids: Vec<u8>,
    /// Servo whose shaft carries the free object (Turn/Screw), if any.
    pub object_id: Option<u8>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub pacing: Pacing,
    pub modes: Vec<ControlMode>,
    /// Control-table profile file; the bundled profile when absent.
    pub profile: Option<String>,
    /// How long reset waits for the initial pose, s.
    pub settle_time: f64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            device: "/dev/ttyUSB0".into(),
            baud: 1_000_000,
            ids: Vec::new(),
            object_id: None,
            timeout_ms: 20,
            retries: 2,
            pacing: Pacing::RealTime,
            modes: vec![ControlMode::Position],
            profile: None,
            settle_time: 2.0,
        }
    }
}

impl HardwareConfig {
    /// Default id chain: claw 10..=12, 20..=22, 30..=32; quadruped legs
    /// 10..=12, 20..=22, 30..=32, 40..=42.
    pub fn default_ids(robot: RobotKind) -> Vec<u8> {
        let legs: &[u8] = match robot {
            RobotKind::DClaw => &[10, 20, 30],
            RobotKind::DKitty => &[10, 20, 30, 40],
        };
        legs.iter().flat_map(|&b| [b, b + 1, b + 2]).collect()
    }

    pub fn load_table(&self) -> Result<ControlTable, ConfigError> {
        match &self.profile {
            None => Ok(ControlTable::default_profile()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{path}: {e}")))?;
                ControlTable::from_toml_str(&text).map_err(|e| ConfigError::Invalid(format!("{path}: {e}")))
            }
        }
    }
}

const PRESENT: [Register; 3] = [Register::PresentCurrent, Register::PresentVelocity, Register::PresentPosition];

pub struct HardwareBackend<T> {
    robot: RobotKind,
    bus: DynamixelBus<T>,
    table: ControlTable,
    config: HardwareConfig,
    lower: Vec<f64>,
    upper: Vec<f64>,
    mode: Option<ControlMode>,
    last_tick: Option<Instant>,
    object: Option<ObjectState>,
    object_raw: f64,
}

#[cfg(target_os = "linux")]
impl HardwareBackend<rbench_dxl::transport::SerialTransport> {
    /// Opens the serial device named in the config.
    pub fn open(robot: RobotKind, config: HardwareConfig) -> Result<Self, BackendError> {
        let table = config.load_table()?;
        let port = rbench_dxl::transport::SerialTransport::open(&config.device, config.baud)
            .map_err(|e| BackendError::Transport { message: e.to_string(), retries: 0 })?;
        Self::new(robot, port, config, table)
    }
}

fn mode_register(mode: ControlMode) -> (OperatingMode, Register) {
    match mode {
        ControlMode::Position => (OperatingMode::Position, Register::GoalPosition),
        ControlMode::ExtendedPosition => (OperatingMode::ExtendedPosition, Register::GoalPosition),
        ControlMode::Velocity => (OperatingMode::Velocity, Register::GoalVelocity),
        ControlMode::Current | ControlMode::Torque => (OperatingMode::Current, Register::GoalCurrent),
        ControlMode::Pwm => (OperatingMode::Pwm, Register::GoalPwm),
    }
}

impl<T: Transport> HardwareBackend<T> {
    pub fn new(robot: RobotKind, transport: T, mut config: HardwareConfig, table: ControlTable) -> Result<Self, BackendError> {
        if config.ids.is_empty() {
            config.ids = HardwareConfig::default_ids(robot);
        }
        if config.ids.len() != robot.joint_count() {
            return Err(ConfigError::Invalid(format!(
                "{robot:?} needs {} servo ids, config lists {}",
                robot.joint_count(),
                config.ids.len()
            ))
            .into());
        }
        if config.modes.is_empty() {
            return Err(ConfigError::Invalid("hardware backend needs at least one control mode".into()).into());
        }
        rbench_dxl::transport::check_baud(config.baud).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        table.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let (lower, upper) = match robot {
            RobotKind::DClaw => (dclaw::lower_bounds().to_vec(), dclaw::upper_bounds().to_vec()),
            RobotKind::DKitty => (dkitty::lower_bounds().to_vec(), dkitty::upper_bounds().to_vec()),
        };
        let options = BusOptions { timeout: Duration::from_millis(config.timeout_ms), retries: config.retries };
        Ok(HardwareBackend {
            robot,
            bus: DynamixelBus::new(transport, options),
            table,
            config,
            lower,
            upper,
            mode: None,
            last_tick: None,
            object: None,
            object_raw: 0.0,
        })
    }

    pub fn bus(&self) -> &DynamixelBus<T> {
        &self.bus
    }

    pub fn table(&self) -> &ControlTable {
        &self.table
    }

    fn err(&self, e: BusError) -> BackendError {
        let retries = match e {
            BusError::Transport(TransportError::Timeout { retries }) => retries,
            _ => self.config.retries,
        };
        BackendError::Transport { message: e.to_string(), retries }
    }

    fn spec(&self, r: Register) -> Result<RegisterSpec, BackendError> {
        self.table.register(r).copied().map_err(|e| ConfigError::Invalid(e.to_string()).into())
    }

    fn all_ids(&self) -> Vec<u8> {
        let mut ids = self.config.ids.clone();
        ids.extend(self.config.object_id);
        ids
    }

    fn broadcast(&mut self, reg: Register, ids: &[u8], values: &[f64]) -> Result<(), BackendError> {
        let spec = self.spec(reg)?;
        let entries: Vec<(u8, Vec<u8>)> = ids.iter().zip(values).map(|(&id, &v)| (id, spec.encode(v))).collect();
        self.bus.sync_write(spec.address, u16::from(spec.width), &entries).map_err(|e| self.err(e))
    }

    fn switch_mode(&mut self, mode: ControlMode) -> Result<(), BackendError> {
        if self.mode == Some(mode) {
            return Ok(());
        }
        let (op, _) = mode_register(mode);
        let value = self.table.mode_value(op).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let ids = self.config.ids.clone();
        let n = ids.len();
        self.broadcast(Register::TorqueEnable, &ids, &vec![0.0; n])?;
        self.broadcast(Register::OperatingMode, &ids, &vec![f64::from(value); n])?;
        self.broadcast(Register::TorqueEnable, &ids, &vec![1.0; n])?;
        self.mode = Some(mode);
        Ok(())
    }

    fn command_limits(&self, mode: ControlMode) -> (Vec<f64>, Vec<f64>) {
        let n = self.lower.len();
        let sym = |v: f64| (vec![-v; n], vec![v; n]);
        match mode {
            ControlMode::Position | ControlMode::ExtendedPosition => (self.lower.clone(), self.upper.clone()),
            ControlMode::Velocity => sym(self.table.safety.speed_limit_rad_s),
            ControlMode::Current => sym(self.table.safety.current_limit_a),
            ControlMode::Torque => sym(self.table.safety.current_limit_a * self.table.datasheet.torque_constant_nm_per_a),
            ControlMode::Pwm => sym(1.0),
        }
    }

    fn sense(&mut self) -> Result<RobotState, BackendError> {
        let (start, len) = self.table.span(&PRESENT).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let ids = self.all_ids();
        let result = self.bus.sync_read(start, len, &ids).map_err(|e| self.err(e))?;
        if !result.missing.is_empty() {
            return Err(BackendError::Transport {
                message: format!("servo ids {:?} did not answer", result.missing),
                retries: self.config.retries,
            });
        }
        if let Some((id, code)) = result.servo_errors.first() {
            return Err(BackendError::Transport { message: format!("servo {id} reported error {code:#04x}"), retries: 0 });
        }
        let specs = [self.spec(PRESENT[0])?, self.spec(PRESENT[1])?, self.spec(PRESENT[2])?];
        let field = |bytes: &[u8], s: &RegisterSpec| {
            let off = usize::from(s.address - start);
            s.decode(&bytes[off..off + usize::from(s.width)])
        };
        let mut joints = JointState::default();
        for id in &self.config.ids {
            let bytes = result.get(*id).expect("complete read");
            joints.current.push(field(bytes, &specs[0]));
            joints.velocity.push(field(bytes, &specs[1]));
            joints.position.push(field(bytes, &specs[2]));
        }
        if let Some(id) = self.config.object_id {
            let bytes = result.get(id).expect("complete read");
            let raw = field(bytes, &specs[2]);
            let velocity = field(bytes, &specs[1]);
            // the shaft reports one revolution; accumulate turns
            let angle = match self.object {
                Some(o) => o.angle + wrap_angle(raw - self.object_raw),
                None => raw,
            };
            self.object_raw = raw;
            self.object = Some(ObjectState { angle, velocity });
        }
        Ok(RobotState { joints, object: self.object, base: None, airborne: false })
    }
}

impl<T: Transport> RobotBackend for HardwareBackend<T> {
    fn name(&self) -> String {
        format!("hardware/{:?}@{}", self.robot, self.config.device)
    }

    fn robot(&self) -> RobotKind {
        self.robot
    }

    fn modes(&self) -> &[ControlMode] {
        &self.config.modes
    }

    fn position_bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    fn reset(&mut self, init: &EpisodeInit) -> Result<RobotState, BackendError> {
        if init.joint_positions.len() != self.lower.len() {
            return Err(ConfigError::Invalid("initial pose length does not match the servo chain".into()).into());
        }
        let mode = if self.config.modes.contains(&ControlMode::Position) {
            ControlMode::Position
        } else {
            return Err(ConfigError::Invalid("resetting needs position mode".into()).into());
        };
        self.mode = None;
        self.switch_mode(mode)?;
        let target = clamp_to(&init.joint_positions, &self.lower, &self.upper);
        let ids = self.config.ids.clone();
        self.broadcast(Register::GoalPosition, &ids, &target)?;
        self.object = None;
        let deadline = Instant::now() + Duration::from_secs_f64(self.config.settle_time);
        let mut state = self.sense()?;
        if self.config.pacing == Pacing::RealTime {
            while Instant::now() < deadline
                && state.joints.position.iter().zip(&target).any(|(q, t)| (q - t).abs() > 0.05)
            {
                std::thread::sleep(Duration::from_millis(20));
                state = self.sense()?;
            }
        }
        self.last_tick = Some(Instant::now());
        Ok(state)
    }

    fn read_state(&mut self) -> Result<RobotState, BackendError> {
        self.sense()
    }

    fn write_command(&mut self, mode: ControlMode, values: &[f64]) -> Result<Vec<f64>, BackendError> {
        check_command(&self.config.modes, self.lower.len(), mode, values)?;
        self.switch_mode(mode)?;
        let (lo, hi) = self.command_limits(mode);
        let mut sent = clamp_to(values, &lo, &hi);
        let (_, reg) = mode_register(mode);
        let raw = if mode == ControlMode::Torque {
            let kt = self.table.datasheet.torque_constant_nm_per_a;
            sent.iter().map(|t| t / kt).collect()
        } else {
            sent.clone()
        };
        let ids = self.config.ids.clone();
        self.broadcast(reg, &ids, &raw)?;
        if mode == ControlMode::Torque {
            sent = raw.iter().map(|c| c * self.table.datasheet.torque_constant_nm_per_a).collect();
        }
        Ok(sent)
    }

    fn advance(&mut self, dt: f64) -> Result<RobotState, BackendError> {
        if self.config.pacing == Pacing::RealTime {
            if let Some(t) = self.last_tick {
                let due = t + Duration::from_secs_f64(dt);
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
            }
            self.last_tick = Some(Instant::now());
        }
        self.sense()
    }
}
