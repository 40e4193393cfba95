//! Target orbit and the rotating VVLH frame the relative motion is written in.
//!
//! Orbit propagation works in km and km/s; relative states, gravity terms and
//! everything downstream of this module use m and m/s.
//!
//! # Frame convention
//!
//! The VVLH frame `O` is attached to the target and defined by
//!
//! - `y`: radial, from the Earth centre through the target (zenith),
//! - `z`: opposite the orbit angular momentum,
//! - `x = y × z`: transverse, along-track for near-circular orbits.
//!
//! With this orientation the frame rotates at `-ḟ` about its own `z` axis,
//! which is what the Coriolis/Euler matrices returned by
//! [`coriolis_centrifugal`] encode.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::linalg::{Mat3, Vec3};

/// Earth gravitational parameter, km³/s².
pub const MU_EARTH: f64 = 398_600.441_8;

const KEPLER_TOL: f64 = 1e-13;
const KEPLER_MAX_ITER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("unsupported orbit: semimajor axis {semimajor_axis_km} km, eccentricity {eccentricity} (need a > 0, 0 <= e < 1)")]
    Unsupported { semimajor_axis_km: f64, eccentricity: f64 },
    #[error("non-finite orbit input: {0}")]
    NonFinite(&'static str),
    #[error("Kepler's equation did not converge for M = {mean_anomaly} rad, e = {eccentricity}")]
    KeplerNoConvergence { mean_anomaly: f64, eccentricity: f64 },
    #[error("zero-length position vector in {0}")]
    ZeroPosition(&'static str),
    #[error("negative propagation time {0} s")]
    NegativeTime(f64),
}

/// Classical elements of the target orbit at `t = 0`. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitElements {
    pub semimajor_axis_km: f64,
    pub eccentricity: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub argp_deg: f64,
    pub mean_anomaly_deg: f64,
}

impl OrbitElements {
    pub fn validate(&self) -> Result<(), OrbitError> {
        let angles = [
            self.inclination_deg,
            self.raan_deg,
            self.argp_deg,
            self.mean_anomaly_deg,
        ];
        if !self.semimajor_axis_km.is_finite() || !self.eccentricity.is_finite() {
            return Err(OrbitError::NonFinite("orbit shape"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(OrbitError::NonFinite("orbit angles"));
        }
        if self.semimajor_axis_km <= 0.0 || !(0.0..1.0).contains(&self.eccentricity) {
            return Err(OrbitError::Unsupported {
                semimajor_axis_km: self.semimajor_axis_km,
                eccentricity: self.eccentricity,
            });
        }
        Ok(())
    }

    /// Mean motion in rad/s.
    pub fn mean_motion(&self) -> f64 {
        (MU_EARTH / self.semimajor_axis_km.powi(3)).sqrt()
    }

    pub fn period_s(&self) -> f64 {
        TAU / self.mean_motion()
    }

    /// Semi-latus rectum, km.
    pub fn semi_latus_rectum(&self) -> f64 {
        self.semimajor_axis_km * (1.0 - self.eccentricity * self.eccentricity)
    }

    /// Rotation from the perifocal frame to the inertial frame.
    fn perifocal_to_inertial(&self) -> Mat3 {
        let (so, co) = self.raan_deg.to_radians().sin_cos();
        let (si, ci) = self.inclination_deg.to_radians().sin_cos();
        let (sw, cw) = self.argp_deg.to_radians().sin_cos();
        Matrix3::new(
            co * cw - so * sw * ci,
            -co * sw - so * cw * ci,
            so * si,
            so * cw + co * sw * ci,
            -so * sw + co * cw * ci,
            -co * si,
            sw * si,
            cw * si,
            ci,
        )
    }
}

/// Unit directions of the bright bodies the optical axes must avoid, frame `I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentVectors {
    pub sun_dir_inertial: Vec3,
    pub earth_dir_inertial: Vec3,
}

/// Target orbit sampled at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitStateAtTime {
    pub t: f64,
    pub true_anomaly_rad: f64,
    pub f_dot: f64,
    pub f_ddot: f64,
    pub target_pos_inertial_km: Vec3,
    pub target_vel_inertial_km_s: Vec3,
    /// Columns are the VVLH axes expressed in `I`.
    pub rot_vvlh_to_inertial: Mat3,
}

impl OrbitStateAtTime {
    /// Inertial position of the service for a relative position `r` (m, frame `O`).
    pub fn service_pos_inertial_km(&self, r_rel_m: &Vec3) -> Vec3 {
        self.target_pos_inertial_km + self.rot_vvlh_to_inertial * (r_rel_m * 1e-3)
    }

    pub fn coriolis_centrifugal(&self) -> (Mat3, Mat3) {
        coriolis_centrifugal(self.f_dot, self.f_ddot)
    }

    /// Differential gravity acting on the service, m/s² in frame `O`.
    pub fn gravity(&self, r_rel_m: &Vec3) -> Result<Vec3, OrbitError> {
        differential_gravity(
            &self.target_pos_inertial_km,
            &self.service_pos_inertial_km(r_rel_m),
            &self.rot_vvlh_to_inertial,
        )
    }

    /// Sun direction is fixed in `I`; the Earth direction points from the
    /// service to the Earth centre.
    pub fn environment(&self, r_rel_m: &Vec3, sun_dir_inertial: &Vec3) -> EnvironmentVectors {
        let r_s = self.service_pos_inertial_km(r_rel_m);
        EnvironmentVectors {
            sun_dir_inertial: sun_dir_inertial.normalize(),
            earth_dir_inertial: -r_s.normalize(),
        }
    }
}

/// First and second time derivatives of the true anomaly.
pub fn true_anomaly_rates(elements: &OrbitElements, f: f64) -> Result<(f64, f64), OrbitError> {
    elements.validate()?;
    if !f.is_finite() {
        return Err(OrbitError::NonFinite("true anomaly"));
    }
    let e = elements.eccentricity;
    let p = elements.semi_latus_rectum();
    let mu_p3 = MU_EARTH / p.powi(3);
    let q = 1.0 + e * f.cos();
    let f_dot = mu_p3.sqrt() * q * q;
    let f_ddot = -2.0 * mu_p3 * e * f.sin() * q.powi(3);
    Ok((f_dot, f_ddot))
}

/// Coriolis (`C_o`) and centrifugal/Euler (`D_o`) matrices of the relative
/// dynamics `v̇ = −C_o v − D_o r + g + F/m + d_f`.
///
/// The centrifugal entries of `D_o` are `−ḟ²` so that `−D_o r` is the outward
/// centrifugal acceleration of the rotating frame.
pub fn coriolis_centrifugal(f_dot: f64, f_ddot: f64) -> (Mat3, Mat3) {
    let w2 = f_dot * f_dot;
    let c = Matrix3::new(0.0, 2.0 * f_dot, 0.0, -2.0 * f_dot, 0.0, 0.0, 0.0, 0.0, 0.0);
    let d = Matrix3::new(-w2, f_ddot, 0.0, -f_ddot, -w2, 0.0, 0.0, 0.0, 0.0);
    (c, d)
}

/// `μ (r_t/‖r_t‖³ − r_s/‖r_s‖³)`, returned in m/s² and rotated into frame `O`.
///
/// Evaluated in the cancellation-free form `μ (F(q) r_t − δ) / ‖r_s‖³` with
/// `δ = r_s − r_t`, since `δ` is tens of metres against a GEO radius.
pub fn differential_gravity(
    r_t_km: &Vec3,
    r_s_km: &Vec3,
    rot_vvlh_to_inertial: &Mat3,
) -> Result<Vec3, OrbitError> {
    let rt2 = r_t_km.norm_squared();
    let rs = r_s_km.norm();
    if rt2 == 0.0 || !rt2.is_finite() {
        return Err(OrbitError::ZeroPosition("target"));
    }
    if rs == 0.0 || !rs.is_finite() {
        return Err(OrbitError::ZeroPosition("service"));
    }
    let delta = r_s_km - r_t_km;
    let q = delta.dot(&(2.0 * r_t_km + delta)) / rt2;
    let s = (1.0 + q).powf(1.5);
    // (1 + q)^{3/2} − 1 without cancellation
    let big_f = q * (3.0 + 3.0 * q + q * q) / (1.0 + s);
    let g_inertial = MU_EARTH * (big_f * r_t_km - delta) / rs.powi(3);
    Ok(rot_vvlh_to_inertial.transpose() * g_inertial * 1e3)
}

/// Eccentric anomaly from mean anomaly by Newton iteration.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64, OrbitError> {
    let m = wrap_pi(mean_anomaly);
    let mut big_e = if e < 0.8 { m } else { PI.copysign(m) };
    for _ in 0..KEPLER_MAX_ITER {
        let step = (big_e - e * big_e.sin() - m) / (1.0 - e * big_e.cos());
        big_e -= step;
        if step.abs() < KEPLER_TOL {
            return Ok(big_e);
        }
    }
    Err(OrbitError::KeplerNoConvergence {
        mean_anomaly,
        eccentricity: e,
    })
}

fn wrap_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Two-body propagation of the target from its elements.
pub fn propagate_target(elements: &OrbitElements, t: f64) -> Result<OrbitStateAtTime, OrbitError> {
    elements.validate()?;
    if !t.is_finite() {
        return Err(OrbitError::NonFinite("time"));
    }
    if t < 0.0 {
        return Err(OrbitError::NegativeTime(t));
    }
    let e = elements.eccentricity;
    let mean = elements.mean_anomaly_deg.to_radians() + elements.mean_motion() * t;
    let f = if e == 0.0 {
        wrap_pi(mean)
    } else {
        let ecc = solve_kepler(mean, e)?;
        2.0 * ((1.0 + e).sqrt() * (ecc / 2.0).sin()).atan2((1.0 - e).sqrt() * (ecc / 2.0).cos())
    };
    let (f_dot, f_ddot) = true_anomaly_rates(elements, f)?;

    let p = elements.semi_latus_rectum();
    let radius = p / (1.0 + e * f.cos());
    let (sf, cf) = f.sin_cos();
    let speed_scale = (MU_EARTH / p).sqrt();
    let q = elements.perifocal_to_inertial();
    let pos = q * Vec3::new(radius * cf, radius * sf, 0.0);
    let vel = q * Vec3::new(-speed_scale * sf, speed_scale * (e + cf), 0.0);

    let normal = q.column(2).into_owned();
    let y = pos.normalize();
    let z = -normal;
    let x = y.cross(&z);
    let rot = Matrix3::from_columns(&[x, y, z]);

    Ok(OrbitStateAtTime {
        t,
        true_anomaly_rad: f,
        f_dot,
        f_ddot,
        target_pos_inertial_km: pos,
        target_vel_inertial_km_s: vel,
        rot_vvlh_to_inertial: rot,
    })
}
