//! The 18 registered benchmark tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RobotKind {
    DClaw,
    DKitty,
}

impl RobotKind {
    pub fn joint_count(self) -> usize {
        match self {
            RobotKind::DClaw => 9,
            RobotKind::DKitty => 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskFamily {
    DClawPose,
    DClawTurn,
    DClawScrew,
    DKittyStand,
    DKittyOrient,
    DKittyWalk,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 6] = [
        TaskFamily::DClawPose,
        TaskFamily::DClawTurn,
        TaskFamily::DClawScrew,
        TaskFamily::DKittyStand,
        TaskFamily::DKittyOrient,
        TaskFamily::DKittyWalk,
    ];

    pub fn robot(self) -> RobotKind {
        match self {
            TaskFamily::DClawPose | TaskFamily::DClawTurn | TaskFamily::DClawScrew => RobotKind::DClaw,
            _ => RobotKind::DKitty,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::DClawPose => "DClawPose",
            TaskFamily::DClawTurn => "DClawTurn",
            TaskFamily::DClawScrew => "DClawScrew",
            TaskFamily::DKittyStand => "DKittyStand",
            TaskFamily::DKittyOrient => "DKittyOrient",
            TaskFamily::DKittyWalk => "DKittyWalk",
        }
    }

    pub fn observation_dim(self) -> usize {
        crate::observation::ObservationLayout::for_family(self).len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskLevel {
    Fixed,
    Random,
    RandomDynamics,
}

impl TaskLevel {
    pub const ALL: [TaskLevel; 3] = [TaskLevel::Fixed, TaskLevel::Random, TaskLevel::RandomDynamics];

    pub fn name(self) -> &'static str {
        match self {
            TaskLevel::Fixed => "Fixed",
            TaskLevel::Random => "Random",
            TaskLevel::RandomDynamics => "RandomDynamics",
        }
    }

    pub fn randomizes_goals(self) -> bool {
        self != TaskLevel::Fixed
    }

    pub fn randomizes_dynamics(self) -> bool {
        self == TaskLevel::RandomDynamics
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskVariant {
    pub family: TaskFamily,
    pub level: TaskLevel,
}

impl TaskVariant {
    pub const fn new(family: TaskFamily, level: TaskLevel) -> Self {
        TaskVariant { family, level }
    }

    /// All registered tasks, D'Claw first, levels in Fixed/Random/RandomDynamics order.
    pub fn all() -> Vec<TaskVariant> {
        TaskFamily::ALL
            .iter()
            .flat_map(|&f| TaskLevel::ALL.iter().map(move |&l| TaskVariant::new(f, l)))
            .collect()
    }

    pub fn name(&self) -> String {
        format!("{}{}", self.family.name(), self.level.name())
    }

    pub fn robot(&self) -> RobotKind {
        self.family.robot()
    }

    pub fn action_dim(&self) -> usize {
        self.robot().joint_count()
    }

    pub fn observation_dim(&self) -> usize {
        self.family.observation_dim()
    }
}

impl fmt::Display for TaskVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for TaskVariant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        // Also accept the singular spelling used for the Pose dynamics variant
        // in some task listings.
        let canonical = if s == "DClawPoseRandomDynamic" { "DClawPoseRandomDynamics" } else { s };
        TaskVariant::all()
            .into_iter()
            .find(|v| v.name() == canonical)
            .ok_or_else(|| ConfigError::UnknownTask(s.to_string()))
    }
}

impl Serialize for TaskVariant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for TaskVariant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
