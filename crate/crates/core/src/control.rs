//! Force and torque laws tracking the safe velocities, and the safety-function
//! monitors `B = Y·(velocity) + α h`.

use std::fmt;

use thiserror::Error;

use crate::constraints::{ActiveSet, BarrierValue, ConeLabel};
use crate::dynamics::{AttitudeState, Inertia, OrbitTerms, TranslationalState};
use crate::filter::PositionBarrier;
use crate::linalg::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("controller gain {name} = {value} must be positive and finite")]
pub struct GainError {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub k_p1: f64,
    pub k_p2: f64,
    pub k_a1: f64,
    pub k_a2: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_p1: 0.55,
            k_p2: 0.2,
            k_a1: 0.2,
            k_a2: 1.1,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), GainError> {
        for (name, value) in [
            ("k_p1", self.k_p1),
            ("k_p2", self.k_p2),
            ("k_a1", self.k_a1),
            ("k_a2", self.k_a2),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(GainError { name, value });
            }
        }
        Ok(())
    }
}

/// Advisory findings of the gain-condition checker. None of these stops a run.
#[derive(Debug, Clone, PartialEq)]
pub enum GainNotice {
    /// The position convergence argument needs `k_p1 = α_p`; it is skipped.
    PositionCheckSkipped { k_p1: f64, alpha_p: f64 },
    /// `k_p1 > 1/2` fails.
    PositionProportional { k_p1: f64 },
    /// `k_p2 > (κ₁ + 1)/2` fails for every `κ₁ > 0`.
    PositionDerivative { k_p2: f64 },
    /// `k_a2 > k_a1 + 1 − α_a + κ₂(α_a + k_a1)/2` fails for every `κ₂ > 0`.
    Attitude { k_a2: f64, required: f64 },
}

impl fmt::Display for GainNotice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainNotice::PositionCheckSkipped { k_p1, alpha_p } => write!(
                f,
                "k_p1 = {k_p1} differs from alpha_p = {alpha_p}; position convergence conditions not checked"
            ),
            GainNotice::PositionProportional { k_p1 } => {
                write!(f, "k_p1 = {k_p1} does not exceed 1/2; position convergence is not guaranteed")
            }
            GainNotice::PositionDerivative { k_p2 } => write!(
                f,
                "k_p2 = {k_p2} does not exceed (kappa_1 + 1)/2 for any kappa_1 > 0; \
                 the sufficient position convergence condition does not hold"
            ),
            GainNotice::Attitude { k_a2, required } => write!(
                f,
                "k_a2 = {k_a2} does not exceed {required}; attitude convergence is not guaranteed"
            ),
        }
    }
}

/// Check the sufficient convergence conditions. The analysis constants κ₁, κ₂
/// are free, so each condition is tested at its most permissive limit.
pub fn check_gains(gains: &ControllerGains, alpha_p: f64, alpha_a: f64) -> Vec<GainNotice> {
    let mut out = Vec::new();
    if gains.k_p1 != alpha_p {
        out.push(GainNotice::PositionCheckSkipped {
            k_p1: gains.k_p1,
            alpha_p,
        });
    } else {
        if gains.k_p1 <= 0.5 {
            out.push(GainNotice::PositionProportional { k_p1: gains.k_p1 });
        }
        if gains.k_p2 <= 0.5 {
            out.push(GainNotice::PositionDerivative { k_p2: gains.k_p2 });
        }
    }
    let required = gains.k_a1 + 1.0 - alpha_a;
    if gains.k_a2 <= required {
        out.push(GainNotice::Attitude {
            k_a2: gains.k_a2,
            required,
        });
    }
    out
}

/// A control vector split into its three labelled parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlTerms {
    /// Cancels the modelled drift.
    pub feedforward: Vec3,
    /// Drives the velocity toward the safe reference.
    pub safety: Vec3,
    /// Cancels the estimated disturbance.
    pub disturbance: Vec3,
}

impl ControlTerms {
    pub fn total(&self) -> Vec3 {
        self.feedforward + self.safety + self.disturbance
    }
}

/// `F = m [C_o v + D_o r − g − (α_p + k_p2) v + k_p2 v_s − d̂_f]`.
pub fn position_control(
    state: &TranslationalState,
    v_s: &Vec3,
    terms: &OrbitTerms,
    d_hat_f: &Vec3,
    mass_model: f64,
    gains: &ControllerGains,
    alpha_p: f64,
) -> ControlTerms {
    ControlTerms {
        feedforward: -mass_model * terms.drift(state),
        safety: mass_model * (-(alpha_p + gains.k_p2) * state.v + gains.k_p2 * v_s),
        disturbance: -mass_model * d_hat_f,
    }
}

/// `T = ω × Jω + J [−(α_a + k_a2) ω + k_a2 ω_s − d̂_t]`.
pub fn attitude_control(
    state: &AttitudeState,
    omega_s: &Vec3,
    d_hat_t: &Vec3,
    inertia_model: &Inertia,
    gains: &ControllerGains,
    alpha_a: f64,
) -> ControlTerms {
    let j = inertia_model.matrix();
    let w = state.omega;
    ControlTerms {
        feedforward: w.cross(&(j * w)),
        safety: j * (-(alpha_a + gains.k_a2) * w + gains.k_a2 * omega_s),
        disturbance: -(j * d_hat_t),
    }
}

/// Safety-function values at one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyMonitorSample {
    /// `B_pi = Y_pi v + α_pi h_pi` per obstacle.
    pub b_p: Vec<f64>,
    /// `B_ai = Y_ai ω + α_a h_ai` for cones in the almost-active set.
    pub b_a: [Option<f64>; 5],
    pub h_p_min: f64,
    pub h_min: f64,
    pub degraded: bool,
}

impl SafetyMonitorSample {
    pub fn b_p_min(&self) -> f64 {
        self.b_p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn b_a_min(&self) -> f64 {
        self.b_a.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when any monitored quantity is negative.
    pub fn any_negative(&self) -> bool {
        self.b_p_min() < 0.0 || self.b_a_min() < 0.0 || self.h_p_min < 0.0 || self.h_min < 0.0
    }
}

pub fn safety_monitors(
    v: &Vec3,
    omega: &Vec3,
    position: &[PositionBarrier],
    attitude: &[Option<BarrierValue>; 5],
    active: &ActiveSet,
    alpha_a: f64,
    degraded: bool,
) -> SafetyMonitorSample {
    let b_p = position
        .iter()
        .map(|b| b.value.grad.dot(v) + b.alpha * b.value.h)
        .collect();
    let b_a = ConeLabel::ALL.map(|l| {
        let b = attitude[l.index()]?;
        active.contains(l).then(|| b.grad.dot(omega) + alpha_a * b.h)
    });
    SafetyMonitorSample {
        b_p,
        b_a,
        h_p_min: position.iter().map(|b| b.value.h).fold(f64::INFINITY, f64::min),
        h_min: active.h_min,
        degraded,
    }
}
