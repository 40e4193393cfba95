//! Scenario configuration: the on-disk schema, validation, and the bundled
//! scenarios.
//!
//! Scenario files use TOML syntax. Every table except `spacecraft`, `initial`
//! and the checkpoint list has defaults matching the reference mission, so a
//! minimal file only needs those. See `book/src/cli.md` for an annotated
//! example and the full key list.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::constraints::{
    boolean_compose, h_values, position_cbf, ConeConstraint, ConeLabel, ConeSet, ConstraintError, EllipsoidObstacle,
    EnvSource, TieBreak, DEFAULT_EPS,
};
use crate::control::{check_gains, ControllerGains, GainError, GainNotice};
use crate::dynamics::{AttitudeState, DisturbanceProfile, DynamicsError, Plant, PlantParams, PlantState, TranslationalState};
use crate::filter::{FilterError, FilterParams};
use crate::linalg::{is_finite3, Mat3, Vec3};
use crate::mission::{Checkpoint, Mission, MissionError, SwitchingRule};
use crate::observer::{ObserverError, ObserverState};
use crate::orbit::{propagate_target, OrbitElements, OrbitError, OrbitStateAtTime};

const INTELSAT30: &str = include_str!("../data/intelsat30.cfg");
const FREESPACE: &str = include_str!("../data/freespace.cfg");

/// Names accepted by [`load_builtin`].
pub const BUILTIN_NAMES: [&str; 2] = ["intelsat30", "freespace"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown built-in scenario {0:?}")]
    UnknownBuiltin(String),
    #[error("{0}")]
    Invalid(String),
    #[error("unsafe start or goal: {0}")]
    Unsafe(String),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Gain(#[from] GainError),
    #[error(transparent)]
    Mission(#[from] MissionError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

// Raw file schema.

fn default_dt() -> f64 {
    0.1
}
fn default_duration() -> f64 {
    12_000.0
}
fn yes() -> bool {
    true
}
fn default_model_scale() -> f64 {
    1.2
}
fn default_sun() -> [f64; 3] {
    [0.0, -0.9, 0.436]
}
fn default_camera() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}
fn identity() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub max_duration: f64,
    #[serde(default)]
    pub strict: bool,
    /// Stop as soon as the last checkpoint is reached.
    #[serde(default = "yes")]
    pub stop_on_complete: bool,
    #[serde(default)]
    pub seed: u64,
    /// Omit for a non-rotating, gravity-free frame.
    pub orbit: Option<OrbitElements>,
    pub spacecraft: SpacecraftConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub gains: GainsConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub observer: ObserverConfig,
    #[serde(default)]
    pub disturbance: DisturbanceProfile,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub mission: MissionConfig,
    #[serde(default, rename = "checkpoint")]
    pub checkpoints: Vec<CheckpointConfig>,
    #[serde(default, rename = "obstacle")]
    pub obstacles: Vec<ObstacleConfig>,
    #[serde(default, rename = "cone")]
    pub cones: Vec<ConeConfig>,
    pub jitter: Option<JitterConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacecraftConfig {
    /// kg
    pub mass: f64,
    /// kg·m², row-major
    pub inertia: [[f64; 3]; 3],
    /// Controller-side mass and inertia are this multiple of the truth.
    #[serde(default = "default_model_scale")]
    pub model_scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Body-to-inertial rotation, row-major.
    #[serde(default = "identity")]
    pub rotation: [[f64; 3]; 3],
    #[serde(default)]
    pub angular_velocity: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsConfig {
    pub k_p1: f64,
    pub k_p2: f64,
    pub k_a1: f64,
    pub k_a2: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        let g = ControllerGains::default();
        Self {
            k_p1: g.k_p1,
            k_p2: g.k_p2,
            k_a1: g.k_a1,
            k_a2: g.k_a2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TieBreakConfig {
    #[default]
    First,
    Second,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub alpha_p: f64,
    pub alpha_a: f64,
    pub gamma_p: f64,
    pub gamma_a: f64,
    /// m/s, symmetric box on each axis
    pub v_max: f64,
    /// deg/s, symmetric box on each axis
    pub omega_max_deg: f64,
    pub eps: f64,
    pub tie_break: TieBreakConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            alpha_p: 0.55,
            alpha_a: 0.6,
            gamma_p: 0.01,
            gamma_a: 0.001,
            v_max: 0.2,
            omega_max_deg: 2.0,
            eps: DEFAULT_EPS,
            tie_break: TieBreakConfig::First,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverConfig {
    /// Diagonal of the observer gain.
    pub gain: [f64; 6],
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            gain: [0.1, 0.1, 0.1, 0.2, 0.2, 0.2],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    /// Sun direction in the inertial frame; normalised on load.
    pub sun: [f64; 3],
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self { sun: default_sun() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionConfig {
    pub position_tolerance: f64,
    pub pointing_tolerance_deg: f64,
    pub dwell: f64,
    /// Camera boresight in the body frame.
    pub camera_axis: [f64; 3],
}

impl Default for MissionConfig {
    fn default() -> Self {
        let r = SwitchingRule::default();
        Self {
            position_tolerance: r.position_tolerance,
            pointing_tolerance_deg: r.pointing_tolerance_deg,
            dwell: r.dwell,
            camera_axis: default_camera(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfig {
    pub position: [f64; 3],
    pub pointing: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub name: String,
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceConfig {
    Sun,
    Earth,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeConfig {
    /// One of `a1` … `a5`.
    pub label: String,
    pub axis: [f64; 3],
    pub source: SourceConfig,
    pub half_angle_deg: f64,
}

/// Seeded uniform perturbation of the initial state, for randomised tests.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JitterConfig {
    /// m, half-width per axis
    pub position: f64,
    /// m/s, half-width per axis
    pub velocity: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            position: 0.0,
            velocity: 0.0,
        }
    }
}

// Validated scenario.

/// A scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dt: f64,
    pub max_duration: f64,
    pub strict: bool,
    pub stop_on_complete: bool,
    pub seed: u64,
    pub plant: Plant,
    pub initial: PlantState,
    pub gains: ControllerGains,
    pub filter: FilterParams,
    pub observer_gain: [f64; 6],
    pub sun_inertial: Vec3,
    pub camera_axis: Vec3,
    pub obstacles: Vec<EllipsoidObstacle>,
    pub cones: ConeSet,
    pub mission: Mission,
    /// Advisory findings of the gain checker.
    pub notices: Vec<GainNotice>,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::from(a)
}

fn mat3(rows: [[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

/// Unit vector from config, allowing for rounding in the written digits.
fn unit(a: [f64; 3], what: &str) -> Result<Vec3, ConfigError> {
    let v = vec3(a);
    if !is_finite3(&v) || (v.norm() - 1.0).abs() > 1e-3 {
        return Err(invalid(format!("{what} must be a unit vector, got {a:?}")));
    }
    Ok(v.normalize())
}

impl Scenario {
    /// Orbit state at `t`, or a fixed identity frame without an orbit.
    pub fn orbit_state(&self, t: f64) -> Result<Option<OrbitStateAtTime>, OrbitError> {
        self.plant.orbit.as_ref().map(|el| propagate_target(el, t)).transpose()
    }

    pub fn vvlh_rotation(&self, t: f64) -> Result<Mat3, OrbitError> {
        Ok(self
            .orbit_state(t)?
            .map_or_else(Mat3::identity, |s| s.rot_vvlh_to_inertial))
    }

    /// Environment directions for a relative position at `t`. Without an orbit
    /// the Earth is taken to lie along `−y`.
    pub fn environment(&self, t: f64, r: &Vec3) -> Result<crate::orbit::EnvironmentVectors, OrbitError> {
        Ok(match self.orbit_state(t)? {
            Some(s) => s.environment(r, &self.sun_inertial),
            None => crate::orbit::EnvironmentVectors {
                sun_dir_inertial: self.sun_inertial,
                earth_dir_inertial: -Vec3::y(),
            },
        })
    }

    pub fn initial_observer(&self) -> Result<ObserverState, ObserverError> {
        let x0 = crate::observer::stack(&self.initial.translation.v, &self.initial.attitude.omega);
        ObserverState::diagonal(self.observer_gain, &x0)
    }

    /// Parse and validate TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_config(parse_config(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_config(cfg: ScenarioConfig) -> Result<Self, ConfigError> {
        if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {}", cfg.dt)));
        }
        if !(cfg.max_duration.is_finite() && cfg.max_duration > 0.0) {
            return Err(invalid(format!("max_duration must be positive, got {}", cfg.max_duration)));
        }
        if let Some(o) = &cfg.orbit {
            o.validate()?;
        }
        let sc = &cfg.spacecraft;
        if !(sc.model_scale.is_finite() && sc.model_scale > 0.0) {
            return Err(invalid(format!("model_scale must be positive, got {}", sc.model_scale)));
        }
        let params = PlantParams::with_model_scale(sc.mass, mat3(sc.inertia), sc.model_scale)?;

        let gains = ControllerGains {
            k_p1: cfg.gains.k_p1,
            k_p2: cfg.gains.k_p2,
            k_a1: cfg.gains.k_a1,
            k_a2: cfg.gains.k_a2,
        };
        gains.validate()?;

        let f = &cfg.filter;
        let w = f.omega_max_deg.to_radians();
        let filter = FilterParams {
            alpha_p: f.alpha_p,
            alpha_a: f.alpha_a,
            gamma_p: f.gamma_p,
            gamma_a: f.gamma_a,
            v_min: Vec3::repeat(-f.v_max),
            v_max: Vec3::repeat(f.v_max),
            omega_min: Vec3::repeat(-w),
            omega_max: Vec3::repeat(w),
            eps: f.eps,
            tie_break: match f.tie_break {
                TieBreakConfig::First => TieBreak::FirstPair,
                TieBreakConfig::Second => TieBreak::SecondPair,
            },
        };
        filter.validate()?;

        let disturbance = cfg.disturbance;
        let finite = disturbance
            .force
            .iter()
            .chain(disturbance.torque.iter())
            .all(|s| s.amplitude.is_finite() && s.frequency.is_finite() && s.phase.is_finite());
        if !finite {
            return Err(invalid("disturbance parameters must be finite"));
        }

        let obstacles = cfg
            .obstacles
            .iter()
            .map(|o| {
                let e = EllipsoidObstacle::new(o.name.clone(), vec3(o.center), vec3(o.semi_axes))?;
                match o.alpha {
                    Some(a) if !(a.is_finite() && a > 0.0) => {
                        Err(invalid(format!("obstacle {:?}: alpha must be positive", o.name)))
                    }
                    Some(a) => Ok(e.with_alpha(a)),
                    None => Ok(e),
                }
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;

        let cones = cfg
            .cones
            .iter()
            .map(|c| {
                let label = ConeLabel::parse(&c.label)
                    .ok_or_else(|| invalid(format!("unknown cone label {:?} (expected a1..a5)", c.label)))?;
                let env = match c.source {
                    SourceConfig::Sun => EnvSource::Sun,
                    SourceConfig::Earth => EnvSource::Earth,
                };
                let axis = unit(c.axis, &format!("cone {label} axis"))?;
                Ok(ConeConstraint::new(label, axis, env, c.half_angle_deg.to_radians())?)
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let cones = ConeSet::new(cones)?;

        let checkpoints = cfg
            .checkpoints
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Ok(Checkpoint {
                    position: vec3(c.position),
                    pointing: unit(c.pointing, &format!("checkpoint {} pointing", i + 1))?,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let m = &cfg.mission;
        let mission = Mission::new(
            checkpoints,
            SwitchingRule {
                position_tolerance: m.position_tolerance,
                pointing_tolerance_deg: m.pointing_tolerance_deg,
                dwell: m.dwell,
            },
        )?;
        let camera_axis = unit(m.camera_axis, "camera_axis")?;
        let sun_inertial = unit_any(cfg.environment.sun, "environment.sun")?;

        let mut initial = PlantState {
            translation: TranslationalState {
                r: vec3(cfg.initial.position),
                v: vec3(cfg.initial.velocity),
            },
            attitude: AttitudeState {
                rot: mat3(cfg.initial.rotation),
                omega: vec3(cfg.initial.angular_velocity),
            },
        };
        let rot = initial.attitude.rot;
        if (rot.transpose() * rot - Mat3::identity()).amax() > 1e-9 || rot.determinant() < 0.0 {
            return Err(invalid("initial rotation must be orthonormal with determinant +1"));
        }
        if !is_finite3(&initial.translation.r) || !is_finite3(&initial.translation.v) || !is_finite3(&initial.attitude.omega) {
            return Err(invalid("initial state must be finite"));
        }
        if let Some(j) = &cfg.jitter {
            if !(j.position >= 0.0 && j.velocity >= 0.0 && j.position.is_finite() && j.velocity.is_finite()) {
                return Err(invalid("jitter half-widths must be finite and nonnegative"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut draw = |w: f64| Vec3::from_fn(|_, _| if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 });
            initial.translation.r += draw(j.position);
            initial.translation.v += draw(j.velocity);
        }

        ObserverState::diagonal(cfg.observer.gain, &crate::linalg::Vec6::zeros())?;

        let notices = check_gains(&gains, filter.alpha_p, filter.alpha_a);
        let scenario = Scenario {
            name: cfg.name,
            dt: cfg.dt,
            max_duration: cfg.max_duration,
            strict: cfg.strict,
            stop_on_complete: cfg.stop_on_complete,
            seed: cfg.seed,
            plant: Plant {
                orbit: cfg.orbit,
                params,
                disturbance,
            },
            initial,
            gains,
            filter,
            observer_gain: cfg.observer.gain,
            sun_inertial,
            camera_axis,
            obstacles,
            cones,
            mission,
            notices,
        };
        scenario.check_safe_start()?;
        Ok(scenario)
    }

    /// The start and every goal must lie in the safe set.
    fn check_safe_start(&self) -> Result<(), ConfigError> {
        let r0 = self.initial.translation.r;
        for o in &self.obstacles {
            let h = position_cbf(&r0, o).h;
            if h <= 0.0 {
                return Err(ConfigError::Unsafe(format!(
                    "initial position is inside obstacle {:?} (h = {h:.6})",
                    o.name
                )));
            }
            for (i, c) in self.mission.checkpoints().iter().enumerate() {
                let h = position_cbf(&c.position, o).h;
                if h <= 0.0 {
                    return Err(ConfigError::Unsafe(format!(
                        "checkpoint {} is inside obstacle {:?} (h = {h:.6})",
                        i + 1,
                        o.name
                    )));
                }
            }
        }
        if self.cones.is_empty() {
            return Ok(());
        }
        let env = self.environment(0.0, &r0)?;
        let h = h_values(&self.cones.evaluate(&self.initial.attitude.rot, &env));
        let h_min = boolean_compose(&h);
        if h_min < 0.0 {
            return Err(ConfigError::Unsafe(format!(
                "initial attitude violates the pointing constraints (composed h = {h_min:.6}, values {h:?})"
            )));
        }
        if let Some(camera) = self.cones.get(ConeLabel::A5) {
            let rot = self.vvlh_rotation(0.0)?;
            for (i, c) in self.mission.checkpoints().iter().enumerate() {
                let dir = rot * c.pointing;
                let cos = camera.env.pick(&env).dot(&dir);
                if cos > camera.cos_half_angle {
                    return Err(ConfigError::Unsafe(format!(
                        "checkpoint {} pointing lies inside the camera exclusion cone at t = 0 \
                         ({:.2} deg from the bright body)",
                        i + 1,
                        cos.clamp(-1.0, 1.0).acos().to_degrees()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parse TOML text into the raw schema without validating it, so that callers
/// can override fields first.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    Ok(toml::from_str(text)?)
}

/// Any nonzero finite direction, normalised.
fn unit_any(a: [f64; 3], what: &str) -> Result<Vec3, ConfigError> {
    let v = vec3(a);
    if !is_finite3(&v) || v.norm() < 1e-12 {
        return Err(invalid(format!("{what} must be a nonzero direction, got {a:?}")));
    }
    Ok(v.normalize())
}

/// Parse and validate one of the scenarios shipped with the crate.
pub fn load_builtin(name: &str) -> Result<Scenario, ConfigError> {
    builtin_text(name).map_or_else(
        || Err(ConfigError::UnknownBuiltin(name.to_owned())),
        Scenario::from_toml_str,
    )
}

/// Raw text of a bundled scenario file.
pub fn builtin_text(name: &str) -> Option<&'static str> {
    match name {
        "intelsat30" => Some(INTELSAT30),
        "freespace" => Some(FREESPACE),
        _ => None,
    }
}
