//! Checkpoint sequencing.
//!
//! A checkpoint fixes a relative position in frame `O` and a pointing
//! direction for the camera boresight, also in frame `O`. The mission moves on
//! once position and pointing errors have both stayed under their thresholds
//! for a dwell time.

use thiserror::Error;

use crate::linalg::{is_finite3, Mat3, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MissionError {
    #[error("mission needs at least one checkpoint")]
    Empty,
    #[error("checkpoint {0}: pointing direction must be a finite unit vector")]
    BadPointing(usize),
    #[error("checkpoint {0}: non-finite position")]
    BadPosition(usize),
    #[error("switching threshold {name} = {value} must be positive and finite")]
    BadThreshold { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub position: Vec3,
    pub pointing: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingRule {
    /// m
    pub position_tolerance: f64,
    /// deg
    pub pointing_tolerance_deg: f64,
    /// s
    pub dwell: f64,
}

impl Default for SwitchingRule {
    fn default() -> Self {
        Self {
            position_tolerance: 0.1,
            pointing_tolerance_deg: 2.0,
            dwell: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MissionState {
    pub current_index: usize,
    /// Whole control steps spent inside the thresholds.
    pub dwell_steps: u64,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    checkpoints: Vec<Checkpoint>,
    pub rule: SwitchingRule,
    pub state: MissionState,
}

impl Mission {
    pub fn new(checkpoints: Vec<Checkpoint>, rule: SwitchingRule) -> Result<Self, MissionError> {
        if checkpoints.is_empty() {
            return Err(MissionError::Empty);
        }
        for (i, c) in checkpoints.iter().enumerate() {
            if !is_finite3(&c.position) {
                return Err(MissionError::BadPosition(i));
            }
            if !is_finite3(&c.pointing) || (c.pointing.norm() - 1.0).abs() > 1e-9 {
                return Err(MissionError::BadPointing(i));
            }
        }
        for (name, value) in [
            ("position_tolerance", rule.position_tolerance),
            ("pointing_tolerance_deg", rule.pointing_tolerance_deg),
            ("dwell", rule.dwell),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(MissionError::BadThreshold { name, value });
            }
        }
        Ok(Self {
            checkpoints,
            rule,
            state: MissionState::default(),
        })
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn current(&self) -> &Checkpoint {
        &self.checkpoints[self.state.current_index]
    }

    /// `(r_d, Γ_I)`: the checkpoint position and its pointing direction
    /// rotated into the inertial frame. After completion the last checkpoint
    /// is held.
    pub fn desired_setpoint(&self, rot_vvlh_to_inertial: &Mat3) -> (Vec3, Vec3) {
        let c = self.current();
        (c.position, (rot_vvlh_to_inertial * c.pointing).normalize())
    }

    /// Update the switching state with the errors measured at this step.
    pub fn advance(&mut self, position_error: f64, pointing_error_deg: f64, dt: f64) -> MissionState {
        if self.state.completed {
            return self.state;
        }
        let inside =
            position_error <= self.rule.position_tolerance && pointing_error_deg <= self.rule.pointing_tolerance_deg;
        if !inside {
            self.state.dwell_steps = 0;
            return self.state;
        }
        self.state.dwell_steps += 1;
        // Counted in steps so that the dwell does not depend on float summation.
        let needed = (self.rule.dwell / dt - 1e-9).ceil().max(1.0) as u64;
        if self.state.dwell_steps >= needed {
            self.state.dwell_steps = 0;
            if self.state.current_index + 1 < self.checkpoints.len() {
                self.state.current_index += 1;
            } else {
                self.state.completed = true;
            }
        }
        self.state
    }
}

/// Angle in degrees between the camera boresight and the desired direction,
/// both in the body frame.
pub fn pointing_error_deg(boresight: &Vec3, gamma_body: &Vec3) -> f64 {
    boresight.cross(gamma_body).norm().atan2(boresight.dot(gamma_body)).to_degrees()
}
