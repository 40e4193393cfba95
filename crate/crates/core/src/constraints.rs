//! Barrier functions for position keep-out zones and optical exclusion cones.
//!
//! Every barrier is reported as a [`BarrierValue`]: the value `h` (safe when
//! `h ≥ 0`) and the row gradient `Y` such that `ḣ = Y · (velocity)` along the
//! kinematics. For ellipsoids the velocity is `v`; for cones it is the body
//! rate `ω`, through `Ṙ = R ω^×`.

use std::fmt;

use thiserror::Error;

use crate::linalg::{skew, Mat3, Vec3};
use crate::orbit::EnvironmentVectors;

/// Default almost-active tolerance.
pub const DEFAULT_EPS: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("obstacle {name:?}: semi-axes must be positive and finite, got {semi_axes:?}")]
    BadSemiAxes { name: String, semi_axes: [f64; 3] },
    #[error("obstacle {0:?}: non-finite centre")]
    BadCenter(String),
    #[error("cone {label}: body axis must be a unit vector")]
    BadAxis { label: ConeLabel },
    #[error("cone {label}: cos of half-angle {cos} outside [-1, 1]")]
    BadAngle { label: ConeLabel, cos: f64 },
    #[error("cone {0} defined twice")]
    DuplicateCone(ConeLabel),
}

/// A barrier value and its gradient row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierValue {
    pub h: f64,
    pub grad: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidObstacle {
    pub name: String,
    /// m, frame `O`
    pub center: Vec3,
    pub semi_axes: Vec3,
    /// Per-obstacle class-K gain overriding the filter's `alpha_p`.
    pub alpha: Option<f64>,
}

impl EllipsoidObstacle {
    pub fn new(name: impl Into<String>, center: Vec3, semi_axes: Vec3) -> Result<Self, ConstraintError> {
        let name = name.into();
        if !semi_axes.iter().all(|l| l.is_finite() && *l > 0.0) {
            return Err(ConstraintError::BadSemiAxes {
                name,
                semi_axes: semi_axes.into(),
            });
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(ConstraintError::BadCenter(name));
        }
        Ok(Self {
            name,
            center,
            semi_axes,
            alpha: None,
        })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }
}

/// `h = Σ ((r_k − c_k)/l_k)² − 1`, `Y_k = 2 (r_k − c_k) / l_k²`.
pub fn position_cbf(r: &Vec3, obs: &EllipsoidObstacle) -> BarrierValue {
    let d = r - obs.center;
    let scaled = d.component_div(&obs.semi_axes);
    let l2 = obs.semi_axes.component_mul(&obs.semi_axes);
    BarrierValue {
        h: scaled.norm_squared() - 1.0,
        grad: (2.0 * d).component_div(&l2),
    }
}

/// Slot of an attitude constraint in the boolean composition.
///
/// `A1`/`A2` are star tracker 1 against sun/Earth, `A3`/`A4` star tracker 2,
/// `A5` the camera against the sun.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConeLabel {
    A1,
    A2,
    A3,
    A4,
    A5,
}

impl ConeLabel {
    pub const ALL: [ConeLabel; 5] = [Self::A1, Self::A2, Self::A3, Self::A4, Self::A5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn bit(self) -> u8 {
        1 << self.index()
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.to_string() == s)
    }
}

impl fmt::Display for ConeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvSource {
    Sun,
    Earth,
}

impl EnvSource {
    pub fn pick(self, env: &EnvironmentVectors) -> Vec3 {
        match self {
            EnvSource::Sun => env.sun_dir_inertial,
            EnvSource::Earth => env.earth_dir_inertial,
        }
    }
}

/// Optical axis `P_B` must stay at least `Ψ` away from an environment direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeConstraint {
    pub label: ConeLabel,
    pub body_axis: Vec3,
    pub env: EnvSource,
    pub cos_half_angle: f64,
}

impl ConeConstraint {
    pub fn new(label: ConeLabel, body_axis: Vec3, env: EnvSource, half_angle_rad: f64) -> Result<Self, ConstraintError> {
        if !((body_axis.norm() - 1.0).abs() < 1e-9) {
            return Err(ConstraintError::BadAxis { label });
        }
        let cos = half_angle_rad.cos();
        if !(cos.is_finite() && cos.abs() <= 1.0) {
            return Err(ConstraintError::BadAngle { label, cos });
        }
        Ok(Self {
            label,
            body_axis,
            env,
            cos_half_angle: cos,
        })
    }
}

/// `h = cos Ψ − V_Iᵀ R P_B`, `Y = V_Iᵀ R P_B^×`.
pub fn attitude_cbf(rot: &Mat3, cone: &ConeConstraint, env: &EnvironmentVectors) -> BarrierValue {
    let v_body = rot.transpose() * cone.env.pick(env);
    BarrierValue {
        h: cone.cos_half_angle - v_body.dot(&cone.body_axis),
        grad: (v_body.transpose() * skew(&cone.body_axis)).transpose(),
    }
}

/// The five attitude constraints by label; absent slots never bind.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConeSet {
    slots: [Option<ConeConstraint>; 5],
}

impl ConeSet {
    pub fn new(cones: impl IntoIterator<Item = ConeConstraint>) -> Result<Self, ConstraintError> {
        let mut slots = [None; 5];
        for c in cones {
            let slot = &mut slots[c.label.index()];
            if slot.is_some() {
                return Err(ConstraintError::DuplicateCone(c.label));
            }
            *slot = Some(c);
        }
        Ok(Self { slots })
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }

    pub fn get(&self, label: ConeLabel) -> Option<&ConeConstraint> {
        self.slots[label.index()].as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConeConstraint> {
        self.slots.iter().flatten()
    }

    pub fn evaluate(&self, rot: &Mat3, env: &EnvironmentVectors) -> [Option<BarrierValue>; 5] {
        self.slots.map(|c| c.map(|c| attitude_cbf(rot, &c, env)))
    }
}

/// Values in label order, `+∞` for absent constraints.
pub fn h_values(values: &[Option<BarrierValue>; 5]) -> [f64; 5] {
    values.map(|v| v.map_or(f64::INFINITY, |b| b.h))
}

/// `((h1 ∧ h2) ∨ (h3 ∧ h4)) ∧ h5` with `∧ = min`, `∨ = max`.
pub fn boolean_compose(h: &[f64; 5]) -> f64 {
    let tracker1 = h[0].min(h[1]);
    let tracker2 = h[2].min(h[3]);
    tracker1.max(tracker2).min(h[4])
}

/// Which tracker pair wins when both pairs have the same composed value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    FirstPair,
    SecondPair,
}

/// Almost-active subset of the attitude constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSet {
    members: u8,
    pub h_values: [f64; 5],
    pub h_min: f64,
}

impl ActiveSet {
    pub fn contains(&self, label: ConeLabel) -> bool {
        self.members & label.bit() != 0
    }

    pub fn bits(&self) -> u8 {
        self.members
    }

    pub fn is_empty(&self) -> bool {
        self.members == 0
    }

    pub fn labels(&self) -> impl Iterator<Item = ConeLabel> + '_ {
        ConeLabel::ALL.into_iter().filter(|l| self.contains(*l))
    }
}

/// Select the constraints within `eps` of the composed minimum.
///
/// The tracker pair is pushed as a whole: pair 1 when `max(h1, h2)` came from
/// pair 1, pair 2 otherwise, and `tie` decides when both are equal.
pub fn almost_active_set(h: &[f64; 5], eps: f64, tie: TieBreak) -> ActiveSet {
    let h1 = h[0].min(h[1]);
    let h2 = h[2].min(h[3]);
    let h3 = h1.max(h2);
    let h4 = h3.min(h[4]);

    let mut members = 0u8;
    if (h4 - h3).abs() <= eps {
        let first = if h1 == h2 { tie == TieBreak::FirstPair } else { h3 == h1 };
        members |= if first {
            ConeLabel::A1.bit() | ConeLabel::A2.bit()
        } else {
            ConeLabel::A3.bit() | ConeLabel::A4.bit()
        };
    }
    if (h4 - h[4]).abs() <= eps {
        members |= ConeLabel::A5.bit();
    }
    assert!(
        members != 0 || !h4.is_finite(),
        "almost-active set empty for finite composition {h:?}"
    );
    ActiveSet {
        members,
        h_values: *h,
        h_min: h4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_sphere() -> EllipsoidObstacle {
        EllipsoidObstacle::new("s", Vec3::zeros(), Vec3::repeat(1.0)).unwrap()
    }

    #[test]
    fn sphere_values() {
        let b = position_cbf(&Vec3::new(2.0, 0.0, 0.0), &unit_sphere());
        assert_eq!(b.h, 3.0);
        assert_eq!(b.grad, Vec3::new(4.0, 0.0, 0.0));
        let c = position_cbf(&Vec3::zeros(), &unit_sphere());
        assert_eq!(c.h, -1.0);
        assert_eq!(c.grad, Vec3::zeros());
    }

    #[test]
    fn ellipsoid_rejects_bad_axes() {
        assert!(EllipsoidObstacle::new("x", Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0)).is_err());
        assert!(EllipsoidObstacle::new("x", Vec3::zeros(), Vec3::new(1.0, f64::NAN, 1.0)).is_err());
        assert!(EllipsoidObstacle::new("x", Vec3::new(f64::NAN, 0., 0.), Vec3::repeat(1.0)).is_err());
    }

    fn env(sun: Vec3) -> EnvironmentVectors {
        EnvironmentVectors {
            sun_dir_inertial: sun,
            earth_dir_inertial: Vec3::new(0.0, 0.0, -1.0),
        }
    }

    #[test]
    fn aligned_axis_has_zero_gradient() {
        let cone = ConeConstraint::new(ConeLabel::A5, Vec3::x(), EnvSource::Sun, 30f64.to_radians()).unwrap();
        let b = attitude_cbf(&Mat3::identity(), &cone, &env(Vec3::x()));
        assert_relative_eq!(b.h, 30f64.to_radians().cos() - 1.0, epsilon = 1e-15);
        assert_relative_eq!(b.h, -0.1340, epsilon = 1e-4);
        assert_eq!(b.grad, Vec3::zeros());
    }

    #[test]
    fn orthogonal_axis_value() {
        let cone = ConeConstraint::new(ConeLabel::A1, Vec3::y(), EnvSource::Sun, 25f64.to_radians()).unwrap();
        let b = attitude_cbf(&Mat3::identity(), &cone, &env(Vec3::x()));
        assert_relative_eq!(b.h, 0.9063, epsilon = 1e-4);
    }

    #[test]
    fn cone_gradient_is_rate_of_change() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.4, -0.9, 2.1).into_inner();
        let cone = ConeConstraint::new(
            ConeLabel::A3,
            Vec3::new(-0.5, 0.5, 0.5f64.sqrt()),
            EnvSource::Earth,
            0.5,
        )
        .unwrap();
        let e = env(Vec3::x());
        let w = Vec3::new(0.02, -0.05, 0.03);
        let b = attitude_cbf(&rot, &cone, &e);
        let h = 1e-4;
        let step = |s: f64| {
            let r = rot * nalgebra::Rotation3::new(w * s).into_inner();
            attitude_cbf(&r, &cone, &e).h
        };
        let fd = (step(h) - step(-h)) / (2.0 * h);
        assert!((fd - b.grad.dot(&w)).abs() < 1e-8);
    }

    #[test]
    fn cone_rejects_non_unit_axis() {
        assert!(ConeConstraint::new(ConeLabel::A1, Vec3::new(1.0, 1.0, 0.0), EnvSource::Sun, 0.3).is_err());
    }

    #[test]
    fn cone_set_rejects_duplicates() {
        let c = ConeConstraint::new(ConeLabel::A2, Vec3::x(), EnvSource::Earth, 0.5).unwrap();
        assert!(matches!(ConeSet::new([c, c]), Err(ConstraintError::DuplicateCone(ConeLabel::A2))));
    }

    #[test]
    fn compose_examples() {
        assert_eq!(boolean_compose(&[0.1, 0.2, -0.1, 0.3, 0.5]), 0.1);
        assert_eq!(boolean_compose(&[-0.1, 0.2, -0.2, 0.3, 0.5]), -0.1);
        assert_eq!(boolean_compose(&[0.5, 0.5, 0.5, 0.5, -0.2]), -0.2);
    }

    fn labels(a: &ActiveSet) -> Vec<String> {
        a.labels().map(|l| l.to_string()).collect()
    }

    #[test]
    fn active_set_traces() {
        let a = almost_active_set(&[0.1, 0.2, -0.1, 0.3, 0.5], 0.05, TieBreak::FirstPair);
        assert_eq!(labels(&a), ["a1", "a2"]);
        assert_eq!(a.h_min, 0.1);

        let a = almost_active_set(&[0.5, 0.5, 0.5, 0.5, 0.1], 0.05, TieBreak::FirstPair);
        assert_eq!(labels(&a), ["a5"]);

        let a = almost_active_set(&[0.12, 0.2, 0.3, 0.4, 0.1], 0.05, TieBreak::FirstPair);
        assert_eq!(labels(&a), ["a5"]);
    }

    #[test]
    fn tie_break_is_configurable() {
        let h = [0.3, 0.4, 0.4, 0.3, 0.9];
        assert_eq!(labels(&almost_active_set(&h, 0.05, TieBreak::FirstPair)), ["a1", "a2"]);
        assert_eq!(labels(&almost_active_set(&h, 0.05, TieBreak::SecondPair)), ["a3", "a4"]);
    }

    #[test]
    fn camera_and_pair_both_within_eps() {
        let a = almost_active_set(&[0.2, 0.3, 0.0, 0.5, 0.21], 0.05, TieBreak::FirstPair);
        assert_eq!(labels(&a), ["a1", "a2", "a5"]);
        assert_eq!(a.bits(), 0b10011);
    }

    #[test]
    fn absent_constraints_never_bind() {
        let inf = f64::INFINITY;
        let a = almost_active_set(&[inf, inf, inf, inf, 0.3], 0.05, TieBreak::FirstPair);
        assert_eq!(labels(&a), ["a5"]);
        let a = almost_active_set(&[inf; 5], 0.05, TieBreak::FirstPair);
        assert!(a.is_empty());
        assert_eq!(boolean_compose(&[inf; 5]), inf);
    }

    #[test]
    fn label_round_trip() {
        for l in ConeLabel::ALL {
            assert_eq!(ConeLabel::parse(&l.to_string()), Some(l));
        }
        assert_eq!(ConeLabel::parse("a6"), None);
    }
}
