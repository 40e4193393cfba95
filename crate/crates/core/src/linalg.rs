use nalgebra::{Matrix3, Vector3, Vector6};

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat3 = Matrix3<f64>;

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

pub(crate) fn is_finite3(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

pub(crate) fn is_finite_mat(m: &Mat3) -> bool {
    m.iter().all(|c| c.is_finite())
}

/// Symmetric positive definite check through Cholesky, with a symmetry tolerance.
pub(crate) fn is_spd(m: &Mat3) -> bool {
    if !is_finite_mat(m) || (m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
        return false;
    }
    m.cholesky().is_some()
}
