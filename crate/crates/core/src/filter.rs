//! Safe velocity and safe angular velocity generation.
//!
//! Each filter is a projection of a nominal virtual control onto the set of
//! velocities that satisfy every barrier row with a robustness margin, inside
//! a box. When the rows and the box have no common point, the rows are relaxed
//! uniformly by the least amount that restores feasibility and the output is
//! flagged as degraded.

use thiserror::Error;

use crate::constraints::{
    position_cbf, ActiveSet, BarrierValue, ConeSet, EllipsoidObstacle, TieBreak, DEFAULT_EPS,
};
use crate::linalg::{is_finite3, Mat3, Vec3};
use crate::qp::{self, Halfspace, QpError, QpProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("filter parameter {name} = {value} is out of range")]
    BadParam { name: &'static str, value: f64 },
    #[error("empty velocity box on axis {0}")]
    EmptyBox(usize),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub alpha_p: f64,
    pub alpha_a: f64,
    pub gamma_p: f64,
    pub gamma_a: f64,
    pub v_min: Vec3,
    pub v_max: Vec3,
    pub omega_min: Vec3,
    pub omega_max: Vec3,
    pub eps: f64,
    pub tie_break: TieBreak,
}

impl Default for FilterParams {
    fn default() -> Self {
        let w = 2f64.to_radians();
        Self {
            alpha_p: 0.55,
            alpha_a: 0.6,
            gamma_p: 0.01,
            gamma_a: 0.001,
            v_min: Vec3::repeat(-0.2),
            v_max: Vec3::repeat(0.2),
            omega_min: Vec3::repeat(-w),
            omega_max: Vec3::repeat(w),
            eps: DEFAULT_EPS,
            tie_break: TieBreak::FirstPair,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), FilterError> {
        let positive = [("alpha_p", self.alpha_p), ("alpha_a", self.alpha_a), ("eps", self.eps)];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(FilterError::BadParam { name, value });
            }
        }
        for (name, value) in [("gamma_p", self.gamma_p), ("gamma_a", self.gamma_a)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(FilterError::BadParam { name, value });
            }
        }
        for (lo, hi) in [(self.v_min, self.v_max), (self.omega_min, self.omega_max)] {
            if !is_finite3(&lo) || !is_finite3(&hi) {
                return Err(FilterError::BadParam {
                    name: "box",
                    value: f64::NAN,
                });
            }
            if let Some(i) = (0..3).find(|&i| lo[i] > hi[i]) {
                return Err(FilterError::EmptyBox(i));
            }
        }
        Ok(())
    }
}

/// Output of one filter evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutput {
    pub value: Vec3,
    /// Set when the rows had to be relaxed to find a solution.
    pub degraded: bool,
    pub relaxation: f64,
    pub kkt_residual: f64,
}

/// `v_c = −k_p1 r_e`.
pub fn nominal_velocity(r_e: &Vec3, k_p1: f64) -> Vec3 {
    -k_p1 * r_e
}

/// `ω_c = k_a1 P_B3 × Γ` with `Γ = Rᵀ Γ_I`; its norm is `k_a1 sin α`.
pub fn nominal_angular_velocity(rot: &Mat3, gamma_inertial: &Vec3, p_b3: &Vec3, k_a1: f64) -> Vec3 {
    let gamma = rot.transpose() * gamma_inertial;
    k_a1 * p_b3.cross(&gamma)
}

/// One evaluated keep-out zone with its class-K gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionBarrier {
    pub value: BarrierValue,
    pub alpha: f64,
}

pub fn evaluate_obstacles(r: &Vec3, obstacles: &[EllipsoidObstacle], params: &FilterParams) -> Vec<PositionBarrier> {
    obstacles
        .iter()
        .map(|o| PositionBarrier {
            value: position_cbf(r, o),
            alpha: o.alpha.unwrap_or(params.alpha_p),
        })
        .collect()
}

/// `Y v ≥ −α h + γ‖Y‖` for each barrier.
pub fn position_rows(barriers: &[PositionBarrier], gamma_p: f64) -> Vec<Halfspace> {
    barriers
        .iter()
        .map(|b| Halfspace::new(b.value.grad, -b.alpha * b.value.h + gamma_p * b.value.grad.norm()))
        .collect()
}

/// Rows for the almost-active cones:
/// `Y ω_s ≥ −α_a h + ‖ω‖ ‖P_B × ω‖ + γ_a ‖Y‖`.
pub fn attitude_rows(
    omega: &Vec3,
    active: &ActiveSet,
    cones: &ConeSet,
    values: &[Option<BarrierValue>; 5],
    params: &FilterParams,
) -> Vec<Halfspace> {
    active
        .labels()
        .filter_map(|l| {
            let cone = cones.get(l)?;
            let b = values[l.index()]?;
            let spin = omega.norm() * cone.body_axis.cross(omega).norm();
            Some(Halfspace::new(
                b.grad,
                -params.alpha_a * b.h + spin + params.gamma_a * b.grad.norm(),
            ))
        })
        .collect()
}

fn filter(target: &Vec3, lower: Vec3, upper: Vec3, rows: Vec<Halfspace>) -> Result<FilterOutput, FilterError> {
    let problem = QpProblem {
        target: *target,
        lower,
        upper,
        rows,
    };
    let out = qp::solve_least_violation(&problem)?;
    Ok(FilterOutput {
        value: out.solution.x,
        degraded: out.relaxation > 0.0,
        relaxation: out.relaxation,
        kkt_residual: out.solution.kkt_residual,
    })
}

/// Safe velocity: projection of `v_c` onto the keep-out rows and velocity box.
pub fn safe_velocity(v_c: &Vec3, barriers: &[PositionBarrier], params: &FilterParams) -> Result<FilterOutput, FilterError> {
    filter(v_c, params.v_min, params.v_max, position_rows(barriers, params.gamma_p))
}

/// Safe angular velocity: projection of `ω_c` onto the almost-active cone rows
/// and rate box.
pub fn safe_angular_velocity(
    omega_c: &Vec3,
    omega: &Vec3,
    active: &ActiveSet,
    cones: &ConeSet,
    values: &[Option<BarrierValue>; 5],
    params: &FilterParams,
) -> Result<FilterOutput, FilterError> {
    filter(
        omega_c,
        params.omega_min,
        params.omega_max,
        attitude_rows(omega, active, cones, values, params),
    )
}
