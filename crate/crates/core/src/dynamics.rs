//! The true plant: relative translation in the rotating VVLH frame and
//! rigid-body attitude with full rotation-matrix kinematics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{is_finite3, is_finite_mat, is_spd, skew, Mat3, Vec3};
use crate::orbit::{propagate_target, OrbitElements, OrbitError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("mass must be positive and finite, got {0}")]
    BadMass(f64),
    #[error("inertia matrix is not symmetric positive definite")]
    BadInertia,
    #[error("non-finite {what} at t = {t} s")]
    NonFinite { what: &'static str, t: f64 },
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TranslationalState {
    /// m, frame `O`
    pub r: Vec3,
    /// m/s, frame `O`
    pub v: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeState {
    /// Body to inertial.
    pub rot: Mat3,
    /// Body rates, rad/s.
    pub omega: Vec3,
}

impl Default for AttitudeState {
    fn default() -> Self {
        Self {
            rot: Mat3::identity(),
            omega: Vec3::zeros(),
        }
    }
}

impl AttitudeState {
    /// Reduced attitude: an inertial direction seen from the body.
    pub fn body_direction(&self, dir_inertial: &Vec3) -> Vec3 {
        self.rot.transpose() * dir_inertial
    }
}

/// The coupled 18-dimensional plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub translation: TranslationalState,
    pub attitude: AttitudeState,
}

impl PlantState {
    fn is_finite(&self) -> bool {
        is_finite3(&self.translation.r)
            && is_finite3(&self.translation.v)
            && is_finite_mat(&self.attitude.rot)
            && is_finite3(&self.attitude.omega)
    }

    fn offset(&self, d: &PlantDerivative, h: f64) -> PlantState {
        PlantState {
            translation: TranslationalState {
                r: self.translation.r + d.r_dot * h,
                v: self.translation.v + d.v_dot * h,
            },
            attitude: AttitudeState {
                rot: self.attitude.rot + d.rot_dot * h,
                omega: self.attitude.omega + d.omega_dot * h,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantDerivative {
    pub r_dot: Vec3,
    pub v_dot: Vec3,
    pub rot_dot: Mat3,
    pub omega_dot: Vec3,
}

/// A validated SPD inertia with its inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inertia {
    matrix: Mat3,
    inverse: Mat3,
}

impl Inertia {
    pub fn new(matrix: Mat3) -> Result<Self, DynamicsError> {
        if !is_spd(&matrix) {
            return Err(DynamicsError::BadInertia);
        }
        let inverse = matrix.try_inverse().ok_or(DynamicsError::BadInertia)?;
        Ok(Self { matrix, inverse })
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.inverse
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, DynamicsError> {
        Self::new(self.matrix * factor)
    }
}

/// True plant parameters and the (possibly wrong) copies the controller uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    pub mass_true: f64,
    pub inertia_true: Inertia,
    pub mass_model: f64,
    pub inertia_model: Inertia,
}

impl PlantParams {
    pub fn new(
        mass_true: f64,
        inertia_true: Mat3,
        mass_model: f64,
        inertia_model: Mat3,
    ) -> Result<Self, DynamicsError> {
        for m in [mass_true, mass_model] {
            if !(m.is_finite() && m > 0.0) {
                return Err(DynamicsError::BadMass(m));
            }
        }
        Ok(Self {
            mass_true,
            inertia_true: Inertia::new(inertia_true)?,
            mass_model,
            inertia_model: Inertia::new(inertia_model)?,
        })
    }

    /// Controller model = `scale ×` truth for both mass and inertia.
    pub fn with_model_scale(mass: f64, inertia: Mat3, scale: f64) -> Result<Self, DynamicsError> {
        Self::new(mass, inertia, mass * scale, inertia * scale)
    }

    pub fn exact(mass: f64, inertia: Mat3) -> Result<Self, DynamicsError> {
        Self::with_model_scale(mass, inertia, 1.0)
    }
}

/// `ṙ = v`, `v̇ = −C_o v − D_o r + g + F/m + d_f`.
#[allow(clippy::too_many_arguments)]
pub fn translational_derivative(
    state: &TranslationalState,
    c_o: &Mat3,
    d_o: &Mat3,
    g: &Vec3,
    force: &Vec3,
    d_f: &Vec3,
    mass: f64,
) -> Result<(Vec3, Vec3), DynamicsError> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(DynamicsError::BadMass(mass));
    }
    if ![state.r, state.v, *g, *force, *d_f].iter().all(is_finite3)
        || !is_finite_mat(c_o)
        || !is_finite_mat(d_o)
    {
        return Err(DynamicsError::NonFinite {
            what: "translational input",
            t: f64::NAN,
        });
    }
    let v_dot = -c_o * state.v - d_o * state.r + g + force / mass + d_f;
    Ok((state.v, v_dot))
}

/// `Ṙ = R ω^×`, `ω̇ = J⁻¹(−ω × Jω + T) + d_t`.
pub fn attitude_derivative(
    state: &AttitudeState,
    torque: &Vec3,
    d_t: &Vec3,
    inertia: &Inertia,
) -> (Mat3, Vec3) {
    let w = state.omega;
    let rot_dot = state.rot * skew(&w);
    let omega_dot = inertia.inverse() * (-w.cross(&(inertia.matrix() * w)) + torque) + d_t;
    (rot_dot, omega_dot)
}

/// One Newton step of the polar decomposition, `R (3I − RᵀR) / 2`.
pub fn reorthonormalize(rot: &Mat3) -> Mat3 {
    rot * (Mat3::identity() * 3.0 - rot.transpose() * rot) * 0.5
}

/// Classical RK4 over the full state; the rotation is re-orthonormalised after
/// the step.
pub fn rk4_step<F>(state: &PlantState, t: f64, dt: f64, mut deriv: F) -> Result<PlantState, DynamicsError>
where
    F: FnMut(f64, &PlantState) -> Result<PlantDerivative, DynamicsError>,
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::BadStep(dt));
    }
    let k1 = deriv(t, state)?;
    let k2 = deriv(t + 0.5 * dt, &state.offset(&k1, 0.5 * dt))?;
    let k3 = deriv(t + 0.5 * dt, &state.offset(&k2, 0.5 * dt))?;
    let k4 = deriv(t + dt, &state.offset(&k3, dt))?;
    let w = dt / 6.0;
    let mut next = *state;
    next.translation.r += (k1.r_dot + 2.0 * k2.r_dot + 2.0 * k3.r_dot + k4.r_dot) * w;
    next.translation.v += (k1.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot) * w;
    next.attitude.rot += (k1.rot_dot + 2.0 * k2.rot_dot + 2.0 * k3.rot_dot + k4.rot_dot) * w;
    next.attitude.omega += (k1.omega_dot + 2.0 * k2.omega_dot + 2.0 * k3.omega_dot + k4.omega_dot) * w;
    next.attitude.rot = reorthonormalize(&next.attitude.rot);
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite {
            what: "plant state",
            t: t + dt,
        });
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    #[default]
    Sin,
    Cos,
}

/// `amplitude · wave(frequency · t + phase)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub wave: Wave,
}

impl Sinusoid {
    pub const fn sin(amplitude: f64, frequency: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase: 0.0,
            wave: Wave::Sin,
        }
    }

    pub const fn cos(amplitude: f64, frequency: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase: 0.0,
            wave: Wave::Cos,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let arg = self.frequency * t + self.phase;
        self.amplitude
            * match self.wave {
                Wave::Sin => arg.sin(),
                Wave::Cos => arg.cos(),
            }
    }

    /// Bound on the time derivative.
    pub fn rate_bound(&self) -> f64 {
        (self.amplitude * self.frequency).abs()
    }
}

/// External force (N) and torque (N·m) per body axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    pub force: [Sinusoid; 3],
    pub torque: [Sinusoid; 3],
}

impl Default for DisturbanceProfile {
    /// The reference mission disturbance.
    fn default() -> Self {
        Self {
            force: [
                Sinusoid::sin(0.01, 0.02),
                Sinusoid::cos(0.02, 0.01),
                Sinusoid::sin(0.01, 0.03),
            ],
            torque: [
                Sinusoid::sin(0.001, 0.03),
                Sinusoid::sin(0.002, 0.02),
                Sinusoid::cos(0.001, 0.03),
            ],
        }
    }
}

impl DisturbanceProfile {
    pub fn zero() -> Self {
        Self {
            force: [Sinusoid::default(); 3],
            torque: [Sinusoid::default(); 3],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = *self;
        for s in out.force.iter_mut().chain(out.torque.iter_mut()) {
            s.amplitude *= factor;
        }
        out
    }

    pub fn force_at(&self, t: f64) -> Vec3 {
        Vec3::from_fn(|i, _| self.force[i].at(t))
    }

    pub fn torque_at(&self, t: f64) -> Vec3 {
        Vec3::from_fn(|i, _| self.torque[i].at(t))
    }

    /// Accelerations `(d_f, d_t)` produced on the true plant.
    pub fn accelerations_at(&self, t: f64, mass: f64, inertia: &Inertia) -> (Vec3, Vec3) {
        (self.force_at(t) / mass, inertia.inverse() * self.torque_at(t))
    }

    /// Analytic bound `δ ≥ ‖ḋ‖` on the stacked acceleration disturbance.
    pub fn derivative_bound(&self, mass: f64, inertia: &Inertia) -> f64 {
        let rate = |s: &[Sinusoid; 3]| s.iter().map(|w| w.rate_bound().powi(2)).sum::<f64>().sqrt();
        let jinv_norm = inertia.inverse().singular_values().max();
        let force = rate(&self.force) / mass;
        let torque = jinv_norm * rate(&self.torque);
        (force * force + torque * torque).sqrt()
    }
}

/// Convenience for `(d_f, d_t)` under a profile.
pub fn disturbance_at(profile: &DisturbanceProfile, t: f64, params: &PlantParams) -> (Vec3, Vec3) {
    profile.accelerations_at(t, params.mass_true, &params.inertia_true)
}

/// True plant with zero-order-hold control inputs.
#[derive(Debug, Clone)]
pub struct Plant {
    /// `None` disables the orbital terms (free space, used by unit scenarios).
    pub orbit: Option<OrbitElements>,
    pub params: PlantParams,
    pub disturbance: DisturbanceProfile,
}

/// Orbit-dependent terms of the relative dynamics at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitTerms {
    pub c_o: Mat3,
    pub d_o: Mat3,
    pub g: Vec3,
}

impl OrbitTerms {
    pub fn zero() -> Self {
        Self {
            c_o: Mat3::zeros(),
            d_o: Mat3::zeros(),
            g: Vec3::zeros(),
        }
    }

    /// Drift `−C_o v − D_o r + g` of the translational dynamics.
    pub fn drift(&self, state: &TranslationalState) -> Vec3 {
        -self.c_o * state.v - self.d_o * state.r + self.g
    }
}

impl Plant {
    pub fn orbit_terms(&self, t: f64, r: &Vec3) -> Result<OrbitTerms, DynamicsError> {
        match &self.orbit {
            None => Ok(OrbitTerms::zero()),
            Some(el) => {
                let s = propagate_target(el, t)?;
                let (c_o, d_o) = s.coriolis_centrifugal();
                Ok(OrbitTerms {
                    c_o,
                    d_o,
                    g: s.gravity(r)?,
                })
            }
        }
    }

    pub fn derivative(
        &self,
        t: f64,
        state: &PlantState,
        force: &Vec3,
        torque: &Vec3,
    ) -> Result<PlantDerivative, DynamicsError> {
        let terms = self.orbit_terms(t, &state.translation.r)?;
        let (d_f, d_t) = disturbance_at(&self.disturbance, t, &self.params);
        let (r_dot, v_dot) = translational_derivative(
            &state.translation,
            &terms.c_o,
            &terms.d_o,
            &terms.g,
            force,
            &d_f,
            self.params.mass_true,
        )
        .map_err(|e| match e {
            DynamicsError::NonFinite { what, .. } => DynamicsError::NonFinite { what, t },
            other => other,
        })?;
        let (rot_dot, omega_dot) =
            attitude_derivative(&state.attitude, torque, &d_t, &self.params.inertia_true);
        Ok(PlantDerivative {
            r_dot,
            v_dot,
            rot_dot,
            omega_dot,
        })
    }

    pub fn step(
        &self,
        state: &PlantState,
        t: f64,
        dt: f64,
        force: &Vec3,
        torque: &Vec3,
    ) -> Result<PlantState, DynamicsError> {
        rk4_step(state, t, dt, |tau, s| self.derivative(tau, s, force, torque))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn at_rest() -> TranslationalState {
        TranslationalState::default()
    }

    #[test]
    fn translational_equilibrium() {
        let z = Vec3::zeros();
        let (rd, vd) =
            translational_derivative(&at_rest(), &Mat3::zeros(), &Mat3::zeros(), &z, &z, &z, 20.0).unwrap();
        assert_eq!(rd, z);
        assert_eq!(vd, z);
    }

    #[test]
    fn coriolis_acts_on_velocity() {
        let (c, d) = crate::orbit::coriolis_centrifugal(1.0, 0.0);
        let s = TranslationalState {
            r: Vec3::zeros(),
            v: Vec3::new(1.0, 0.0, 0.0),
        };
        let z = Vec3::zeros();
        let (_, vd) = translational_derivative(&s, &c, &d, &z, &z, &z, 1.0).unwrap();
        assert_eq!(vd, Vec3::new(0.0, 2.0, 0.0));
    }

    #[test]
    fn force_cancels_gravity() {
        let g = Vec3::new(1e-7, -3e-7, 2e-8);
        let m = 20.0;
        let z = Vec3::zeros();
        let (_, vd) =
            translational_derivative(&at_rest(), &Mat3::zeros(), &Mat3::zeros(), &g, &(-m * g), &z, m).unwrap();
        assert!(vd.norm() < 1e-22);
    }

    #[test]
    fn translational_rejects_bad_input() {
        let z = Vec3::zeros();
        let nan = Vec3::new(f64::NAN, 0.0, 0.0);
        assert!(translational_derivative(&at_rest(), &Mat3::zeros(), &Mat3::zeros(), &z, &nan, &z, 1.0).is_err());
        assert!(translational_derivative(&at_rest(), &Mat3::zeros(), &Mat3::zeros(), &z, &z, &z, 0.0).is_err());
    }

    #[test]
    fn attitude_at_rest() {
        let j = Inertia::new(Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0))).unwrap();
        let (rd, wd) = attitude_derivative(&AttitudeState::default(), &Vec3::zeros(), &Vec3::zeros(), &j);
        assert_eq!(rd, Mat3::zeros());
        assert_eq!(wd, Vec3::zeros());
    }

    #[test]
    fn spherical_inertia_has_no_gyroscopic_term() {
        let j = Inertia::new(Mat3::identity()).unwrap();
        let s = AttitudeState {
            rot: Mat3::identity(),
            omega: Vec3::new(0.0, 0.0, 1.0),
        };
        let (_, wd) = attitude_derivative(&s, &Vec3::zeros(), &Vec3::zeros(), &j);
        assert_eq!(wd, Vec3::zeros());
    }

    #[test]
    fn gyroscopic_term_by_hand() {
        // -(1,1,0) x (1,2,0) = -(0,0,1); J^-1 -> (0,0,-1/3)
        let j = Inertia::new(Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0))).unwrap();
        let s = AttitudeState {
            rot: Mat3::identity(),
            omega: Vec3::new(1.0, 1.0, 0.0),
        };
        let (_, wd) = attitude_derivative(&s, &Vec3::zeros(), &Vec3::zeros(), &j);
        assert_relative_eq!(wd, Vec3::new(0.0, 0.0, -1.0 / 3.0), epsilon = 1e-15);
    }

    #[test]
    fn singular_inertia_rejected() {
        assert!(Inertia::new(Mat3::from_diagonal(&Vec3::new(1.0, 0.0, 1.0))).is_err());
        assert!(PlantParams::new(0.0, Mat3::identity(), 1.0, Mat3::identity()).is_err());
    }

    fn free_plant(params: PlantParams) -> Plant {
        Plant {
            orbit: None,
            params,
            disturbance: DisturbanceProfile::zero(),
        }
    }

    #[test]
    fn rest_is_a_fixed_point_of_rk4() {
        let plant = free_plant(PlantParams::exact(20.0, Mat3::identity()).unwrap());
        let s = PlantState::default();
        let n = plant.step(&s, 0.0, 0.1, &Vec3::zeros(), &Vec3::zeros()).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn nonpositive_step_rejected() {
        let plant = free_plant(PlantParams::exact(20.0, Mat3::identity()).unwrap());
        let s = PlantState::default();
        assert!(matches!(
            plant.step(&s, 0.0, 0.0, &Vec3::zeros(), &Vec3::zeros()),
            Err(DynamicsError::BadStep(_))
        ));
    }

    #[test]
    fn nonfinite_state_aborts() {
        let plant = free_plant(PlantParams::exact(20.0, Mat3::identity()).unwrap());
        let s = PlantState::default();
        let f = Vec3::new(f64::INFINITY, 0.0, 0.0);
        assert!(plant.step(&s, 0.0, 0.1, &f, &Vec3::zeros()).is_err());
    }

    #[test]
    fn reorthonormalize_pulls_back_to_so3() {
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner();
        let perturbed = r + Mat3::from_fn(|i, j| 1e-5 * ((i * 3 + j) as f64).sin());
        let fixed = reorthonormalize(&perturbed);
        let before = (perturbed.transpose() * perturbed - Mat3::identity()).norm();
        let after = (fixed.transpose() * fixed - Mat3::identity()).norm();
        assert!(after < before * 1e-4);
    }

    #[test]
    fn reference_disturbance_at_zero() {
        let p = DisturbanceProfile::default();
        assert_eq!(p.force_at(0.0), Vec3::new(0.0, 0.02, 0.0));
        assert_eq!(p.torque_at(0.0), Vec3::new(0.0, 0.0, 0.001));
        for k in 0..1000 {
            assert!(p.force_at(k as f64 * 3.7).x.abs() <= 0.01);
        }
    }

    #[test]
    fn derivative_bound_dominates_sampled_rates() {
        let p = DisturbanceProfile::default();
        let j = Inertia::new(Mat3::new(
            0.660429, 0.014514, 0.008125, 0.014514, 0.847357, 0.035428, 0.008125, 0.035428, 0.783912,
        ))
        .unwrap();
        let delta = p.derivative_bound(20.0, &j);
        let h = 1e-3;
        for k in 0..2000 {
            let t = k as f64 * 1.7 + 1.0;
            let (f1, t1) = p.accelerations_at(t - h, 20.0, &j);
            let (f2, t2) = p.accelerations_at(t + h, 20.0, &j);
            let rate = ((f2 - f1).norm_squared() + (t2 - t1).norm_squared()).sqrt() / (2.0 * h);
            assert!(rate <= delta * (1.0 + 1e-6));
        }
    }
}
