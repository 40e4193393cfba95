//! Lumped disturbance observer on the stacked velocity state `x = [v; ω]`.
//!
//! The controller's model writes `ẋ = M(x) + N u + d`, where `M` is the drift
//! and `N u` the control effect computed with the model mass and inertia. The
//! observer
//!
//! ```text
//! ż = −L z − L (L x + M + N u),   d̂ = z + L x
//! ```
//!
//! gives estimation-error dynamics `ė = −L e + ḋ`, whatever the model
//! mismatch folded into `d`.

use nalgebra::{Matrix6, Vector6};
use thiserror::Error;

use crate::dynamics::{Inertia, OrbitTerms, PlantState};
use crate::linalg::{Vec3, Vec6};

pub type Mat6 = Matrix6<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("observer gain must be symmetric positive definite")]
    BadGain,
    #[error("observer step must be positive, got {0}")]
    BadStep(f64),
    #[error("observer state became non-finite")]
    NonFinite,
}

/// Stack `[a; b]`.
pub fn stack(a: &Vec3, b: &Vec3) -> Vec6 {
    Vector6::new(a.x, a.y, a.z, b.x, b.y, b.z)
}

pub fn split(x: &Vec6) -> (Vec3, Vec3) {
    (x.fixed_rows::<3>(0).into(), x.fixed_rows::<3>(3).into())
}

/// Drift `M` of the stacked velocity state under the model parameters.
pub fn model_drift(state: &PlantState, terms: &OrbitTerms, inertia_model: &Inertia) -> Vec6 {
    let w = state.attitude.omega;
    let gyro = -(inertia_model.inverse() * w.cross(&(inertia_model.matrix() * w)));
    stack(&terms.drift(&state.translation), &gyro)
}

/// Control effect `N u` under the model parameters.
pub fn control_effect(force: &Vec3, torque: &Vec3, mass_model: f64, inertia_model: &Inertia) -> Vec6 {
    stack(&(force / mass_model), &(inertia_model.inverse() * torque))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(l: &Mat6) -> f64 {
    l.symmetric_eigenvalues().min()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub z: Vec6,
    pub gain: Mat6,
    pub d_hat: Vec6,
}

impl ObserverState {
    /// Observer with `z(0) = −L x(0)`, so that `d̂(0) = 0`.
    pub fn new(gain: Mat6, x0: &Vec6) -> Result<Self, ObserverError> {
        let sym = (gain - gain.transpose()).amax() <= 1e-12 * gain.amax().max(1.0);
        if !gain.iter().all(|g| g.is_finite()) || !sym || gain.cholesky().is_none() {
            return Err(ObserverError::BadGain);
        }
        Ok(Self {
            z: -gain * x0,
            gain,
            d_hat: Vec6::zeros(),
        })
    }

    pub fn diagonal(gains: [f64; 6], x0: &Vec6) -> Result<Self, ObserverError> {
        Self::new(Mat6::from_diagonal(&Vec6::from(gains)), x0)
    }

    /// Young-inequality constant used by the error bound, `μ = λ_min(L)`.
    pub fn mu(&self) -> f64 {
        lambda_min(&self.gain)
    }

    /// Ultimate bound `δ / sqrt(μ (λ_min(L) − μ/2))` on `‖e‖` for a
    /// disturbance whose derivative is bounded by `delta`.
    pub fn error_bound(&self, delta: f64) -> f64 {
        let lam = lambda_min(&self.gain);
        let mu = self.mu();
        delta / (mu * (lam - 0.5 * mu)).sqrt()
    }

    /// Integrate over `[t_{k−1}, t_k]` with RK4. `x` and `M` are linearly
    /// interpolated between the samples; the control effect is held.
    pub fn step(
        &mut self,
        x_prev: &Vec6,
        x_next: &Vec6,
        m_prev: &Vec6,
        m_next: &Vec6,
        n_u: &Vec6,
        dt: f64,
    ) -> Result<(), ObserverError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(ObserverError::BadStep(dt));
        }
        let l = self.gain;
        let f = |s: f64, z: &Vec6| -> Vec6 {
            let x = x_prev.lerp(x_next, s);
            let m = m_prev.lerp(m_next, s);
            -l * z - l * (l * x + m + n_u)
        };
        let z = self.z;
        let k1 = f(0.0, &z);
        let k2 = f(0.5, &(z + k1 * (0.5 * dt)));
        let k3 = f(0.5, &(z + k2 * (0.5 * dt)));
        let k4 = f(1.0, &(z + k3 * dt));
        let z = z + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0);
        let d_hat = z + l * x_next;
        if !z.iter().chain(d_hat.iter()).all(|c| c.is_finite()) {
            return Err(ObserverError::NonFinite);
        }
        self.z = z;
        self.d_hat = d_hat;
        Ok(())
    }

    pub fn estimate(&self) -> (Vec3, Vec3) {
        split(&self.d_hat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l01() -> Mat6 {
        Mat6::identity() * 0.1
    }

    #[test]
    fn exact_init_with_no_disturbance_stays_zero() {
        // ẋ = M + N u exactly, so d̂ stays at 0 up to integration error.
        let mut x = Vec6::new(0.1, -0.2, 0.05, 0.01, 0.0, -0.02);
        let mut obs = ObserverState::new(l01(), &x).unwrap();
        let n = Vec6::repeat(0.01);
        let dt = 0.1;
        for k in 0..1000 {
            let m = Vec6::from_fn(|i, _| 0.001 * ((k as f64) * 0.01 + i as f64).sin());
            let x_next = x + (m + n) * dt;
            obs.step(&x, &x_next, &m, &m, &n, dt).unwrap();
            x = x_next;
        }
        assert!(obs.d_hat.amax() < 1e-12, "{}", obs.d_hat.amax());
    }

    #[test]
    fn constant_disturbance_error_decays_exponentially() {
        let d = Vec6::new(0.01, -0.02, 0.005, 0.001, 0.0, -0.003);
        let mut x = Vec6::zeros();
        let mut obs = ObserverState::new(l01(), &x).unwrap();
        let dt = 0.1;
        let z = Vec6::zeros();
        for _ in 0..600 {
            let x_next = x + d * dt;
            obs.step(&x, &x_next, &z, &z, &z, dt).unwrap();
            x = x_next;
        }
        let e = (d - obs.d_hat).norm() / d.norm();
        assert!((e - (-6.0f64).exp()).abs() < 1e-6, "{e}");
    }

    #[test]
    fn bound_formula() {
        let obs = ObserverState::diagonal([0.1, 0.1, 0.1, 0.2, 0.2, 0.2], &Vec6::zeros()).unwrap();
        assert!((obs.mu() - 0.1).abs() < 1e-15);
        assert!((obs.error_bound(1.0) - 2f64.sqrt() / 0.1).abs() < 1e-9);
    }

    #[test]
    fn rejects_indefinite_gain() {
        assert_eq!(
            ObserverState::diagonal([0.1, 0.1, -0.1, 0.2, 0.2, 0.2], &Vec6::zeros()),
            Err(ObserverError::BadGain)
        );
    }

    #[test]
    fn rejects_bad_step() {
        let mut obs = ObserverState::new(l01(), &Vec6::zeros()).unwrap();
        let z = Vec6::zeros();
        assert_eq!(obs.step(&z, &z, &z, &z, &z, 0.0), Err(ObserverError::BadStep(0.0)));
    }
}
