//! Control-table register maps, loaded from per-model profile data.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::UsageError;

const DEFAULT_PROFILE: &str = include_str!("../profiles/xm430-w210.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Register {
    OperatingMode,
    TorqueEnable,
    PwmLimit,
    CurrentLimit,
    VelocityLimit,
    MaxPositionLimit,
    MinPositionLimit,
    GoalPwm,
    GoalCurrent,
    GoalVelocity,
    GoalPosition,
    RealtimeTick,
    PresentPwm,
    PresentCurrent,
    PresentVelocity,
    PresentPosition,
    VelocityTrajectory,
    PositionTrajectory,
    PresentInputVoltage,
    PresentTemperature,
}

impl Register {
    /// Registers every profile must provide: one goal register per control
    /// mode, every sensed quantity and every limit.
    pub const REQUIRED: [Register; 20] = [
        Register::OperatingMode,
        Register::TorqueEnable,
        Register::PwmLimit,
        Register::CurrentLimit,
        Register::VelocityLimit,
        Register::MaxPositionLimit,
        Register::MinPositionLimit,
        Register::GoalPwm,
        Register::GoalCurrent,
        Register::GoalVelocity,
        Register::GoalPosition,
        Register::RealtimeTick,
        Register::PresentPwm,
        Register::PresentCurrent,
        Register::PresentVelocity,
        Register::PresentPosition,
        Register::VelocityTrajectory,
        Register::PositionTrajectory,
        Register::PresentInputVoltage,
        Register::PresentTemperature,
    ];
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatingMode {
    Current,
    Velocity,
    Position,
    ExtendedPosition,
    CurrentBasedPosition,
    Pwm,
}

impl OperatingMode {
    pub const REQUIRED: [OperatingMode; 5] = [
        OperatingMode::Current,
        OperatingMode::Velocity,
        OperatingMode::Position,
        OperatingMode::ExtendedPosition,
        OperatingMode::Pwm,
    ];
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegisterSpec {
    pub address: u16,
    pub width: u8,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: i64,
    #[serde(default)]
    pub signed: bool,
}

impl RegisterSpec {
    pub fn end(&self) -> u16 {
        self.address + u16::from(self.width)
    }

    fn raw_range(&self) -> (i64, i64) {
        let bits = 8 * u32::from(self.width);
        if self.signed {
            (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
        } else {
            (0, (1i64 << bits) - 1)
        }
    }

    pub fn to_raw(&self, value: f64) -> i64 {
        let (lo, hi) = self.raw_range();
        let raw = (value / self.scale).round() as i64 + self.offset;
        raw.clamp(lo, hi)
    }

    pub fn from_raw(&self, raw: i64) -> f64 {
        (raw - self.offset) as f64 * self.scale
    }

    /// Little-endian register bytes for an SI value.
    pub fn encode(&self, value: f64) -> Vec<u8> {
        let raw = self.to_raw(value);
        raw.to_le_bytes()[..self.width as usize].to_vec()
    }

    pub fn decode(&self, bytes: &[u8]) -> f64 {
        self.from_raw(self.decode_raw(bytes))
    }

    pub fn decode_raw(&self, bytes: &[u8]) -> i64 {
        let w = self.width as usize;
        let mut buf = [0u8; 8];
        buf[..w].copy_from_slice(&bytes[..w]);
        let unsigned = u64::from_le_bytes(buf);
        if self.signed {
            let shift = 64 - 8 * w as u32;
            ((unsigned << shift) as i64) >> shift
        } else {
            unsigned as i64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datasheet {
    pub no_load_speed_rad_s: f64,
    pub stall_current_a: f64,
    pub stall_torque_nm: f64,
    pub torque_constant_nm_per_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyDefaults {
    pub speed_limit_rad_s: f64,
    pub current_limit_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTable {
    pub model: String,
    #[serde(default)]
    pub model_number: u16,
    pub datasheet: Datasheet,
    pub safety: SafetyDefaults,
    pub operating_modes: BTreeMap<OperatingMode, u8>,
    pub registers: BTreeMap<Register, RegisterSpec>,
}

impl ControlTable {
    /// The bundled XM430-W210 profile.
    pub fn default_profile() -> Self {
        Self::from_toml_str(DEFAULT_PROFILE).expect("bundled profile is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, UsageError> {
        let table: ControlTable =
            toml::from_str(text).map_err(|e| UsageError::Profile(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        for r in Register::REQUIRED {
            if !self.registers.contains_key(&r) {
                return Err(UsageError::MissingRegister(r.to_string()));
            }
        }
        for m in OperatingMode::REQUIRED {
            if !self.operating_modes.contains_key(&m) {
                return Err(UsageError::MissingMode(format!("{m:?}")));
            }
        }
        for (name, spec) in &self.registers {
            if !matches!(spec.width, 1 | 2 | 4) {
                return Err(UsageError::Profile(format!("{name}: width {}", spec.width)));
            }
            if !(spec.scale.is_finite() && spec.scale > 0.0) {
                return Err(UsageError::Profile(format!("{name}: scale {}", spec.scale)));
            }
        }
        let mut sorted: Vec<_> = self.registers.iter().collect();
        sorted.sort_by_key(|(_, s)| s.address);
        for pair in sorted.windows(2) {
            let (a, sa) = pair[0];
            let (b, sb) = pair[1];
            if sa.end() > sb.address {
                return Err(UsageError::Overlap(a.to_string(), b.to_string()));
            }
        }
        Ok(())
    }

    pub fn register(&self, r: Register) -> Result<&RegisterSpec, UsageError> {
        self.registers.get(&r).ok_or_else(|| UsageError::MissingRegister(r.to_string()))
    }

    pub fn mode_value(&self, m: OperatingMode) -> Result<u8, UsageError> {
        self.operating_modes
            .get(&m)
            .copied()
            .ok_or_else(|| UsageError::MissingMode(format!("{m:?}")))
    }

    /// Smallest address block covering all `regs`, as (address, length).
    pub fn span(&self, regs: &[Register]) -> Result<(u16, u16), UsageError> {
        let mut lo = u16::MAX;
        let mut hi = 0u16;
        for &r in regs {
            let s = self.register(r)?;
            lo = lo.min(s.address);
            hi = hi.max(s.end());
        }
        if lo > hi {
            return Err(UsageError::NoIds);
        }
        Ok((lo, hi - lo))
    }
}
