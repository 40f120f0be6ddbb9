use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Direction;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("acceleration bounds must satisfy a_min < 0 < a_max (got {a_min}, {a_max})")]
    Acceleration { a_min: f64, a_max: f64 },
    #[error("speed limit must be positive (got {0})")]
    SpeedLimit(f64),
    #[error("discrete speeds must be sorted, distinct, start at 0 and not exceed v_max")]
    DiscreteSpeeds,
    #[error("turn times must be non-negative")]
    TurnTime,
    #[error("no motion primitive leaves a standstill")]
    NoPrimitives,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriveKind {
    /// Moves in any direction; corners are taken at speed.
    Omnidirectional,
    /// Moves only along its heading; rotates in place at zero speed.
    DifferentialDrive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub kind: DriveKind,
    /// m/s
    pub v_max: f64,
    /// m/s
    pub v_min: f64,
    /// m/s²
    pub a_max: f64,
    /// m/s², negative
    pub a_min: f64,
    /// Admissible speeds at vertices, ascending, starting with 0.
    pub discrete_speeds: Vec<f64>,
    /// Seconds for a left or right turn.
    pub turn_time_90: f64,
    /// Seconds for turning around.
    pub turn_time_180: f64,
}

impl RobotModel {
    /// Speed in [0, 2] m/s, acceleration in [-1, 1] m/s², vertex speeds {0, √2, 2}.
    pub fn omnidirectional() -> Self {
        Self {
            kind: DriveKind::Omnidirectional,
            v_max: 2.0,
            v_min: 0.0,
            a_max: 1.0,
            a_min: -1.0,
            discrete_speeds: vec![0.0, std::f64::consts::SQRT_2, 2.0],
            turn_time_90: 0.0,
            turn_time_180: 0.0,
        }
    }

    /// Same dynamic limits as [`RobotModel::omnidirectional`], plus in-place
    /// turns of 0.5 s (quarter) and 0.9 s (half).
    pub fn differential_drive() -> Self {
        Self {
            kind: DriveKind::DifferentialDrive,
            turn_time_90: 0.5,
            turn_time_180: 0.9,
            ..Self::omnidirectional()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.a_min < 0.0 && self.a_max > 0.0) {
            return Err(ModelError::Acceleration {
                a_min: self.a_min,
                a_max: self.a_max,
            });
        }
        if !(self.v_max > 0.0) {
            return Err(ModelError::SpeedLimit(self.v_max));
        }
        let s = &self.discrete_speeds;
        let sorted = s.windows(2).all(|w| w[0] < w[1]);
        if s.first() != Some(&0.0) || !sorted || s.iter().any(|v| *v > self.v_max + 1e-12) {
            return Err(ModelError::DiscreteSpeeds);
        }
        if self.turn_time_90 < 0.0 || self.turn_time_180 < 0.0 {
            return Err(ModelError::TurnTime);
        }
        Ok(())
    }

    pub fn is_differential(&self) -> bool {
        self.kind == DriveKind::DifferentialDrive
    }

    /// Time to rotate in place from `from` to `to` (zero for omnidirectional robots).
    pub fn turn_time(&self, from: Direction, to: Direction) -> f64 {
        if !self.is_differential() {
            return 0.0;
        }
        match from.quarter_turns_to(to) {
            0 => 0.0,
            1 => self.turn_time_90,
            _ => self.turn_time_180,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        RobotModel::omnidirectional().validate().unwrap();
        RobotModel::differential_drive().validate().unwrap();
    }

    #[test]
    fn rejects_bad_models() {
        let mut m = RobotModel::omnidirectional();
        m.discrete_speeds = vec![0.5, 1.0];
        assert_eq!(m.validate(), Err(ModelError::DiscreteSpeeds));
        let mut m = RobotModel::omnidirectional();
        m.discrete_speeds.push(3.0);
        assert_eq!(m.validate(), Err(ModelError::DiscreteSpeeds));
        let mut m = RobotModel::omnidirectional();
        m.a_min = 0.5;
        assert!(matches!(m.validate(), Err(ModelError::Acceleration { .. })));
    }

    #[test]
    fn turn_times() {
        let m = RobotModel::differential_drive();
        assert_eq!(m.turn_time(Direction::North, Direction::East), 0.5);
        assert_eq!(m.turn_time(Direction::North, Direction::South), 0.9);
        assert_eq!(m.turn_time(Direction::North, Direction::North), 0.0);
        let o = RobotModel::omnidirectional();
        assert_eq!(o.turn_time(Direction::North, Direction::South), 0.0);
    }
}
