//! Exact projection onto a polytope in three variables.
//!
//! The problem is `min ‖x − target‖²` subject to `lower ≤ x ≤ upper` and rows
//! `a·x ≥ b`. Because the objective is a scaled identity, the optimum for a
//! fixed set of equality-active constraints is a projection onto an affine
//! subspace, and a KKT point always exists with at most three linearly
//! independent active constraints. The solver therefore enumerates active sets
//! of size 0 to 3 in a fixed order and returns the first one that is primal
//! feasible with nonnegative multipliers. Worst-case work is bounded and the
//! result is deterministic.

use thiserror::Error;

use crate::linalg::{is_finite3, Vec3};

/// Row and bound feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Multiplier sign tolerance.
pub const DUAL_TOL: f64 = 1e-8;

const ZERO_ROW: f64 = 1e-12;
const SINGULAR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("lower bound exceeds upper bound on axis {0}")]
    EmptyBox(usize),
    #[error("non-finite problem data")]
    NonFinite,
}

/// `normal · x ≥ offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Halfspace {
    pub normal: Vec3,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &Vec3) -> f64 {
        (self.offset - self.normal.dot(x)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub target: Vec3,
    pub lower: Vec3,
    pub upper: Vec3,
    pub rows: Vec<Halfspace>,
}

impl QpProblem {
    pub fn boxed(target: Vec3, lower: Vec3, upper: Vec3) -> Self {
        Self {
            target,
            lower,
            upper,
            rows: Vec::new(),
        }
    }

    pub fn with_row(mut self, normal: Vec3, offset: f64) -> Self {
        self.rows.push(Halfspace::new(normal, offset));
        self
    }

    fn validate(&self) -> Result<(), QpError> {
        if !is_finite3(&self.target) || !is_finite3(&self.lower) || !is_finite3(&self.upper) {
            return Err(QpError::NonFinite);
        }
        if self.rows.iter().any(|r| !is_finite3(&r.normal) || !r.offset.is_finite()) {
            return Err(QpError::NonFinite);
        }
        if let Some(i) = (0..3).find(|&i| self.lower[i] > self.upper[i]) {
            return Err(QpError::EmptyBox(i));
        }
        Ok(())
    }

    /// Largest row violation at `x`, ignoring the box.
    pub fn max_row_violation(&self, x: &Vec3) -> f64 {
        self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec3,
    pub status: QpStatus,
    /// Max of primal infeasibility, dual infeasibility, complementarity and
    /// stationarity error, in normalised-row units. `∞` when infeasible.
    pub kkt_residual: f64,
    /// Multiplier of each input row (0 for inactive or dropped rows).
    pub row_multipliers: Vec<f64>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Constraint in normalised form, tagged with its origin.
#[derive(Debug, Clone, Copy)]
struct Con {
    a: Vec3,
    b: f64,
    row: Option<usize>,
}

fn constraints(p: &QpProblem) -> Option<Vec<Con>> {
    let mut out = Vec::with_capacity(p.rows.len() + 6);
    for (i, r) in p.rows.iter().enumerate() {
        let n = r.normal.norm();
        if n < ZERO_ROW {
            if r.offset > FEAS_TOL {
                return None;
            }
            continue;
        }
        out.push(Con {
            a: r.normal / n,
            b: r.offset / n,
            row: Some(i),
        });
    }
    for k in 0..3 {
        let mut e = Vec3::zeros();
        e[k] = 1.0;
        out.push(Con {
            a: e,
            b: p.lower[k],
            row: None,
        });
        out.push(Con {
            a: -e,
            b: -p.upper[k],
            row: None,
        });
    }
    Some(out)
}

/// Projection of `t` onto `{a_j·x = b_j}`; `None` if the normals are dependent.
fn project(t: &Vec3, set: &[Con]) -> Option<(Vec3, [f64; 3])> {
    let mut lam = [0.0; 3];
    match set.len() {
        0 => Some((*t, lam)),
        1 => {
            let c = set[0];
            lam[0] = c.b - c.a.dot(t);
            Some((t + c.a * lam[0], lam))
        }
        n => {
            let mut g = nalgebra::Matrix3::<f64>::identity();
            let mut rhs = Vec3::zeros();
            for i in 0..n {
                rhs[i] = set[i].b - set[i].a.dot(t);
                for j in 0..n {
                    g[(i, j)] = set[i].a.dot(&set[j].a);
                }
            }
            if g.determinant().abs() < SINGULAR {
                return None;
            }
            let sol = g.lu().solve(&rhs)?;
            let mut x = *t;
            for i in 0..n {
                lam[i] = sol[i];
                x += set[i].a * sol[i];
            }
            Some((x, lam))
        }
    }
}

fn feasible(x: &Vec3, cons: &[Con]) -> bool {
    cons.iter().all(|c| c.a.dot(x) >= c.b - FEAS_TOL)
}

fn infeasible(p: &QpProblem) -> QpSolution {
    QpSolution {
        x: p.target.zip_zip_map(&p.lower, &p.upper, |t, l, u| t.clamp(l, u)),
        status: QpStatus::Infeasible,
        kkt_residual: f64::INFINITY,
        row_multipliers: vec![0.0; p.rows.len()],
    }
}

fn finish(p: &QpProblem, cons: &[Con], set: &[usize], x: Vec3, lam: &[f64; 3]) -> QpSolution {
    let x = x.zip_zip_map(&p.lower, &p.upper, |v, l, u| v.clamp(l, u));
    let mut row_multipliers = vec![0.0; p.rows.len()];
    let mut grad = x - p.target;
    let mut residual: f64 = 0.0;
    for (k, &j) in set.iter().enumerate() {
        let c = cons[j];
        grad -= c.a * lam[k];
        residual = residual
            .max(-lam[k])
            .max((lam[k] * (c.a.dot(&x) - c.b)).abs());
        if let Some(r) = c.row {
            row_multipliers[r] = lam[k].max(0.0) / p.rows[r].normal.norm();
        }
    }
    for c in cons {
        residual = residual.max(c.b - c.a.dot(&x));
    }
    residual = residual.max(grad.amax());
    QpSolution {
        x,
        status: QpStatus::Optimal,
        kkt_residual: residual.max(0.0),
        row_multipliers,
    }
}

/// Solve the projection problem exactly.
pub fn solve(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.validate()?;
    let Some(cons) = constraints(p) else {
        return Ok(infeasible(p));
    };
    let m = cons.len();
    let t = p.target;

    // Best primal-feasible candidate, kept in case tolerances reject every
    // multiplier sign pattern on a degenerate vertex.
    let mut best: Option<(f64, Vec<usize>, Vec3, [f64; 3])> = None;
    let mut consider = |set: &[usize]| -> Option<QpSolution> {
        let picked: Vec<Con> = set.iter().map(|&j| cons[j]).collect();
        let (x, lam) = project(&t, &picked)?;
        if !feasible(&x, &cons) {
            return None;
        }
        if lam[..set.len()].iter().all(|&l| l >= -DUAL_TOL) {
            return Some(finish(p, &cons, set, x, &lam));
        }
        let obj = (x - t).norm_squared();
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, set.to_vec(), x, lam));
        }
        None
    };

    if let Some(s) = consider(&[]) {
        return Ok(s);
    }
    for i in 0..m {
        if let Some(s) = consider(&[i]) {
            return Ok(s);
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            if let Some(s) = consider(&[i, j]) {
                return Ok(s);
            }
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                if let Some(s) = consider(&[i, j, k]) {
                    return Ok(s);
                }
            }
        }
    }
    Ok(match best {
        Some((_, set, x, lam)) => finish(p, &cons, &set, x, &lam),
        None => infeasible(p),
    })
}

/// Result of [`solve_least_violation`].
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    pub solution: QpSolution,
    /// Uniform relaxation applied to every row offset (0 when the original
    /// problem was feasible).
    pub relaxation: f64,
}

/// Solve the problem, or if it is infeasible, the closest problem whose rows
/// are all relaxed by the smallest common amount `s` that restores
/// feasibility within the box.
pub fn solve_least_violation(p: &QpProblem) -> Result<RelaxedSolution, QpError> {
    let first = solve(p)?;
    if first.is_optimal() {
        return Ok(RelaxedSolution {
            solution: first,
            relaxation: 0.0,
        });
    }
    let relaxed = |s: f64| QpProblem {
        rows: p
            .rows
            .iter()
            .map(|r| Halfspace::new(r.normal, r.offset - s))
            .collect(),
        ..p.clone()
    };
    let centre = (p.lower + p.upper) * 0.5;
    let mut hi = p.max_row_violation(&centre).max(FEAS_TOL);
    let mut lo = 0.0;
    for _ in 0..100 {
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if solve(&relaxed(mid))?.is_optimal() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut solution = solve(&relaxed(hi))?;
    if !solution.is_optimal() {
        // The centre of the box is always feasible for the upper bracket.
        solution = solve(&relaxed(p.max_row_violation(&centre) + FEAS_TOL))?;
    }
    Ok(RelaxedSolution {
        solution,
        relaxation: hi,
    })
}
