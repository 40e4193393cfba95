//! Closed-loop simulation, telemetry CSV and summary report.
//!
//! One control step at `t_k = k·dt`:
//!
//! 1. sample the target orbit and environment,
//! 2. update the disturbance observer over `[t_{k−1}, t_k]`,
//! 3. read the current checkpoint,
//! 4. evaluate all barriers and run both safety filters,
//! 5. compute force and torque, evaluate the monitors, emit a record,
//! 6. update the mission state and integrate the plant to `t_{k+1}` with the
//!    inputs held.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::constraints::{almost_active_set, h_values, ConeLabel};
use crate::control::{attitude_control, position_control, safety_monitors, ControlTerms};
use crate::dynamics::{DynamicsError, PlantState};
use crate::filter::{
    evaluate_obstacles, nominal_angular_velocity, nominal_velocity, safe_angular_velocity, safe_velocity, FilterError,
};
use crate::linalg::{Mat3, Vec3, Vec6};
use crate::mission::{pointing_error_deg, Mission};
use crate::observer::{control_effect, model_drift, stack, ObserverError, ObserverState};
use crate::orbit::OrbitError;
use crate::scenario::Scenario;

/// Telemetry layout version, written in the last column of every row.
pub const SCHEMA_VERSION: u32 = 1;
/// A barrier below `−VIOLATION_TOL` counts as a safety violation.
pub const VIOLATION_TOL: f64 = 1e-6;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    /// Mission incomplete, or violations in non-strict mode.
    pub const INCOMPLETE: i32 = 1;
    pub const STRICT_VIOLATION: i32 = 2;
    pub const NUMERICAL_FAILURE: i32 = 3;
    pub const CONFIG_ERROR: i32 = 4;
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("telemetry output: {0}")]
    Io(#[from] io::Error),
}

/// Everything logged at one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    pub r: Vec3,
    pub v: Vec3,
    pub rot: Mat3,
    pub omega: Vec3,
    pub v_s: Vec3,
    pub omega_s: Vec3,
    pub force: ControlTerms,
    pub torque: ControlTerms,
    pub v_c: Vec3,
    pub omega_c: Vec3,
    pub r_d: Vec3,
    pub d_hat: Vec6,
    /// Lumped disturbance the observer is estimating: the external
    /// disturbance plus the effect of model mismatch at the applied inputs.
    pub d_true: Vec6,
    pub h_p: Vec<f64>,
    pub h_a: [f64; 5],
    pub h_min: f64,
    pub b_p: Vec<f64>,
    /// `NaN` for cones outside the almost-active set.
    pub b_a: [f64; 5],
    pub b_p_min: f64,
    pub b_a_min: f64,
    pub active_mask: u8,
    /// Zero-based.
    pub checkpoint: usize,
    pub degraded: bool,
    pub pointing_error_deg: f64,
    /// `1 − P_B3ᵀΓ + ½‖ω − ω_c‖²`
    pub v_a2: f64,
}

impl TelemetryRecord {
    pub fn h_p_min(&self) -> f64 {
        self.h_p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn position_error(&self) -> f64 {
        (self.r - self.r_d).norm()
    }

    pub fn observer_error(&self) -> Vec6 {
        self.d_true - self.d_hat
    }

    /// Numeric columns in header order.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(110 + 2 * self.h_p.len());
        out.push(self.t);
        out.extend(self.r.iter());
        out.extend(self.v.iter());
        out.extend(self.rot.transpose().iter()); // row-major
        out.extend(self.omega.iter());
        out.extend(self.v_s.iter());
        out.extend(self.omega_s.iter());
        out.extend(self.force.total().iter());
        out.extend(self.torque.total().iter());
        for t in [&self.force, &self.torque] {
            out.extend(t.feedforward.iter());
            out.extend(t.safety.iter());
            out.extend(t.disturbance.iter());
        }
        out.extend(self.v_c.iter());
        out.extend(self.omega_c.iter());
        out.extend(self.r_d.iter());
        out.extend(self.d_hat.iter());
        out.extend(self.d_true.iter());
        out.extend(self.h_p.iter());
        out.extend(self.h_a.iter());
        out.push(self.h_min);
        out.extend(self.b_p.iter());
        out.extend(self.b_a.iter());
        out.push(self.b_p_min);
        out.push(self.b_a_min);
        out.push(f64::from(self.active_mask));
        out.push((self.checkpoint + 1) as f64);
        out.push(if self.degraded { 1.0 } else { 0.0 });
        out.push(self.pointing_error_deg);
        out.push(self.v_a2);
        out
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

/// Column names for a scenario with the given obstacle names.
pub fn columns(obstacle_names: &[String]) -> Vec<String> {
    let mut c: Vec<String> = vec!["t".into()];
    let xyz = |p: &str| ["x", "y", "z"].map(|a| format!("{p}_{a}"));
    c.extend(xyz("r"));
    c.extend(xyz("v"));
    for i in 1..=3 {
        for j in 1..=3 {
            c.push(format!("R_{i}{j}"));
        }
    }
    for p in ["omega", "v_s", "omega_s", "F", "T"] {
        c.extend(xyz(p));
    }
    for p in ["F_ff", "F_safe", "F_dist", "T_ff", "T_safe", "T_dist", "v_c", "omega_c", "r_d"] {
        c.extend(xyz(p));
    }
    c.extend((1..=6).map(|i| format!("d_hat_{i}")));
    c.extend((1..=6).map(|i| format!("d_{i}")));
    c.extend(obstacle_names.iter().map(|n| format!("h_p_{}", sanitize(n))));
    c.extend(ConeLabel::ALL.map(|l| format!("h_{l}")));
    c.push("h_min".into());
    c.extend(obstacle_names.iter().map(|n| format!("B_p_{}", sanitize(n))));
    c.extend(ConeLabel::ALL.map(|l| format!("B_{l}")));
    for n in ["B_p_min", "B_a_min", "active_mask", "checkpoint", "degraded", "pointing_error_deg", "V_a2"] {
        c.push(n.into());
    }
    c.push("schema_version".into());
    c
}

/// Streams records as CSV: one header row, then one row per record, every
/// float with 17 significant digits.
pub struct TelemetryWriter<W: Write> {
    out: W,
    width: usize,
}

impl<W: Write> TelemetryWriter<W> {
    pub fn new(mut out: W, obstacle_names: &[String]) -> io::Result<Self> {
        let cols = columns(obstacle_names);
        writeln!(out, "{}", cols.join(","))?;
        Ok(Self {
            out,
            width: cols.len() - 1,
        })
    }

    pub fn write(&mut self, rec: &TelemetryRecord) -> io::Result<()> {
        let values = rec.values();
        if values.len() != self.width {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("record has {} columns, header has {}", values.len(), self.width),
            ));
        }
        let mut line = String::with_capacity(values.len() * 24);
        for v in values {
            line.push_str(&format!("{v:.16e},"));
        }
        line.push_str(&SCHEMA_VERSION.to_string());
        writeln!(self.out, "{line}")
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Write a whole run to `path`.
pub fn write_telemetry(records: &[TelemetryRecord], obstacle_names: &[String], path: &Path) -> io::Result<()> {
    let wrap = |e: io::Error| io::Error::new(e.kind(), format!("{}: {e}", path.display()));
    let file = std::fs::File::create(path).map_err(wrap)?;
    let mut w = TelemetryWriter::new(io::BufWriter::new(file), obstacle_names).map_err(wrap)?;
    for r in records {
        w.write(r).map_err(wrap)?;
    }
    w.finish().map_err(wrap)?;
    Ok(())
}

/// Machine-readable outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub scenario: String,
    pub min_h_p: f64,
    pub min_h_min: f64,
    pub max_abs_v: [f64; 3],
    pub max_abs_omega: [f64; 3],
    pub completion_time_s: Option<f64>,
    pub violations: u64,
    pub exit_status: i32,
    pub steps: u64,
    pub final_time_s: f64,
    pub checkpoints_reached: usize,
    pub degraded_steps: u64,
    pub failure: Option<String>,
}

impl SummaryReport {
    fn new(name: &str) -> Self {
        Self {
            scenario: name.to_owned(),
            min_h_p: f64::INFINITY,
            min_h_min: f64::INFINITY,
            max_abs_v: [0.0; 3],
            max_abs_omega: [0.0; 3],
            completion_time_s: None,
            violations: 0,
            exit_status: exit::INCOMPLETE,
            steps: 0,
            final_time_s: 0.0,
            checkpoints_reached: 0,
            degraded_steps: 0,
            failure: None,
        }
    }

    fn absorb(&mut self, rec: &TelemetryRecord) {
        self.min_h_p = self.min_h_p.min(rec.h_p_min());
        self.min_h_min = self.min_h_min.min(rec.h_min);
        for i in 0..3 {
            self.max_abs_v[i] = self.max_abs_v[i].max(rec.v[i].abs());
            self.max_abs_omega[i] = self.max_abs_omega[i].max(rec.omega[i].abs());
        }
        if rec.h_p_min() < -VIOLATION_TOL || rec.h_min < -VIOLATION_TOL {
            self.violations += 1;
        }
        if rec.degraded {
            self.degraded_steps += 1;
        }
        self.steps += 1;
        self.final_time_s = rec.t;
    }
}

/// A running simulation.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    pub mission: Mission,
    pub state: PlantState,
    pub observer: ObserverState,
    step: u64,
    prev: Option<(Vec6, Vec6, Vec6)>,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self, SimError> {
        Ok(Self {
            scenario,
            mission: scenario.mission.clone(),
            state: scenario.initial,
            observer: scenario.initial_observer()?,
            step: 0,
            prev: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.scenario.dt
    }

    /// Compute and record the controls at the current time.
    pub fn control(&mut self) -> Result<TelemetryRecord, SimError> {
        let sc = self.scenario;
        let params = &sc.plant.params;
        let t = self.time();
        let st = self.state;
        let r = st.translation.r;
        let v = st.translation.v;
        let rot = st.attitude.rot;
        let w = st.attitude.omega;

        let terms = sc.plant.orbit_terms(t, &r)?;
        let frame = sc.vvlh_rotation(t)?;
        let env = sc.environment(t, &r)?;

        let x = stack(&v, &w);
        let m = model_drift(&st, &terms, &params.inertia_model);
        if let Some((x_prev, m_prev, n_prev)) = self.prev {
            self.observer.step(&x_prev, &x, &m_prev, &m, &n_prev, sc.dt)?;
        }
        let (d_hat_f, d_hat_t) = self.observer.estimate();

        let (r_d, gamma_i) = self.mission.desired_setpoint(&frame);
        let r_e = r - r_d;
        let v_c = nominal_velocity(&r_e, sc.gains.k_p1);
        let barriers = evaluate_obstacles(&r, &sc.obstacles, &sc.filter);
        let qp1 = safe_velocity(&v_c, &barriers, &sc.filter)?;

        let gamma_b = rot.transpose() * gamma_i;
        let omega_c = nominal_angular_velocity(&rot, &gamma_i, &sc.camera_axis, sc.gains.k_a1);
        let cone_values = sc.cones.evaluate(&rot, &env);
        let h_a = h_values(&cone_values);
        let active = almost_active_set(&h_a, sc.filter.eps, sc.filter.tie_break);
        let qp2 = safe_angular_velocity(&omega_c, &w, &active, &sc.cones, &cone_values, &sc.filter)?;

        let force = position_control(
            &st.translation,
            &qp1.value,
            &terms,
            &d_hat_f,
            params.mass_model,
            &sc.gains,
            sc.filter.alpha_p,
        );
        let torque = attitude_control(
            &st.attitude,
            &qp2.value,
            &d_hat_t,
            &params.inertia_model,
            &sc.gains,
            sc.filter.alpha_a,
        );
        let (f, tq) = (force.total(), torque.total());

        let degraded = qp1.degraded || qp2.degraded;
        let mon = safety_monitors(&v, &w, &barriers, &cone_values, &active, sc.filter.alpha_a, degraded);

        let (d_f, d_t) = crate::dynamics::disturbance_at(&sc.plant.disturbance, t, params);
        let jt = &params.inertia_true;
        let jm = &params.inertia_model;
        let lumped_f = f * (1.0 / params.mass_true - 1.0 / params.mass_model) + d_f;
        let lumped_t = jt.inverse() * (-w.cross(&(jt.matrix() * w)) + tq) + d_t
            - jm.inverse() * (-w.cross(&(jm.matrix() * w)) + tq);

        let we = w - omega_c;
        let rec = TelemetryRecord {
            t,
            r,
            v,
            rot,
            omega: w,
            v_s: qp1.value,
            omega_s: qp2.value,
            force,
            torque,
            v_c,
            omega_c,
            r_d,
            d_hat: self.observer.d_hat,
            d_true: stack(&lumped_f, &lumped_t),
            h_p: barriers.iter().map(|b| b.value.h).collect(),
            h_a,
            h_min: active.h_min,
            b_p_min: mon.b_p_min(),
            b_a_min: mon.b_a_min(),
            b_p: mon.b_p,
            b_a: mon.b_a.map(|b| b.unwrap_or(f64::NAN)),
            active_mask: active.bits(),
            checkpoint: self.mission.state.current_index,
            degraded,
            pointing_error_deg: pointing_error_deg(&sc.camera_axis, &gamma_b),
            v_a2: 1.0 - sc.camera_axis.dot(&gamma_b) + 0.5 * we.norm_squared(),
        };

        let n = control_effect(&f, &tq, params.mass_model, &params.inertia_model);
        self.prev = Some((x, m, n));
        Ok(rec)
    }

    /// Integrate the plant to the next control time with the inputs of `rec`.
    pub fn advance(&mut self, rec: &TelemetryRecord) -> Result<(), SimError> {
        let t = self.time();
        self.state = self
            .scenario
            .plant
            .step(&self.state, t, self.scenario.dt, &rec.force.total(), &rec.torque.total())?;
        self.step += 1;
        Ok(())
    }
}

/// Run a scenario to completion or its time limit, handing every record to
/// `sink`. Numerical failures end the run and are reported in the summary
/// with exit status 3; sink errors are returned.
pub fn run<F>(scenario: &Scenario, mut sink: F) -> Result<SummaryReport, SimError>
where
    F: FnMut(&TelemetryRecord) -> io::Result<()>,
{
    let mut summary = SummaryReport::new(&scenario.name);
    let mut sim = Simulation::new(scenario)?;
    let last = (scenario.max_duration / scenario.dt + 1e-9).floor() as u64;
    let mut strict_stop = false;

    let outcome: Result<(), SimError> = (|| {
        loop {
            let rec = sim.control()?;
            sink(&rec)?;
            summary.absorb(&rec);
            if scenario.strict && (rec.h_p_min() < -VIOLATION_TOL || rec.h_min < -VIOLATION_TOL) {
                strict_stop = true;
                return Ok(());
            }
            let before = sim.mission.state;
            let after = sim.mission.advance(rec.position_error(), rec.pointing_error_deg, scenario.dt);
            if after.completed && !before.completed {
                summary.completion_time_s = Some(rec.t);
                if scenario.stop_on_complete {
                    return Ok(());
                }
            }
            if sim.step >= last {
                return Ok(());
            }
            sim.advance(&rec)?;
        }
    })();

    let m = sim.mission.state;
    summary.checkpoints_reached = m.current_index + usize::from(m.completed);
    match outcome {
        Err(SimError::Io(e)) => return Err(SimError::Io(e)),
        Err(e) => {
            summary.failure = Some(e.to_string());
            summary.exit_status = exit::NUMERICAL_FAILURE;
        }
        Ok(()) => {
            summary.exit_status = if strict_stop {
                exit::STRICT_VIOLATION
            } else if summary.completion_time_s.is_some() && summary.violations == 0 {
                exit::SUCCESS
            } else {
                exit::INCOMPLETE
            };
        }
    }
    Ok(summary)
}

/// Run and keep every record in memory.
pub fn run_collect(scenario: &Scenario) -> Result<(SummaryReport, Vec<TelemetryRecord>), SimError> {
    let mut records = Vec::new();
    let summary = run(scenario, |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((summary, records))
}

/// Run and stream telemetry to a CSV file.
pub fn run_to_csv(scenario: &Scenario, path: &Path) -> Result<SummaryReport, SimError> {
    let wrap = |e: io::Error| io::Error::new(e.kind(), format!("{}: {e}", path.display()));
    let file = std::fs::File::create(path).map_err(wrap)?;
    let names: Vec<String> = scenario.obstacles.iter().map(|o| o.name.clone()).collect();
    let mut w = TelemetryWriter::new(io::BufWriter::new(file), &names).map_err(wrap)?;
    let summary = run(scenario, |r| w.write(r).map_err(wrap))?;
    w.finish().map_err(wrap)?;
    Ok(summary)
}
