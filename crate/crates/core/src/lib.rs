//! Safety-critical inspection control for a service spacecraft flying around a
//! large target in orbit.
//!
//! The control stack is cascaded. Kinematic safety filters turn nominal virtual
//! controls into a *safe velocity* and a *safe angular velocity* by solving two
//! small quadratic programs built from control barrier functions (ellipsoidal
//! keep-out zones for position, optical exclusion cones for attitude). A pair of
//! proportional-like controllers then track those safe velocities, with a
//! nonlinear disturbance observer cancelling external disturbances and model
//! mismatch.
//!
//! Modules, bottom-up:
//!
//! - [`orbit`]: Keplerian target propagation, VVLH frame, differential gravity.
//! - [`dynamics`]: the true plant (relative translation + rigid-body attitude) and its RK4 integrator.
//! - [`constraints`]: position and attitude barrier functions, boolean composition, almost-active set.
//! - [`qp`]: exact dense projection QP in three variables.
//! - [`filter`]: safe velocity / safe angular velocity generation.
//! - [`observer`]: lumped disturbance observer.
//! - [`control`]: force/torque laws and safety-function monitors.
//! - [`mission`]: checkpoint sequencing.
//! - [`scenario`]: configuration schema, validation and the bundled scenarios.
//! - [`sim`]: the closed-loop simulation, telemetry CSV and summary report.
//!
//! The guide under `book/` walks through the same material with runnable
//! snippets; those snippets are compiled as doc-tests of this crate.

pub mod constraints;
pub mod control;
pub mod dynamics;
pub mod filter;
pub mod mission;
pub mod observer;
pub mod orbit;
pub mod qp;
pub mod scenario;
pub mod sim;

mod linalg;

pub use linalg::{skew, Mat3, Vec3, Vec6};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/orbit.md")]
    mod orbit {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/barriers.md")]
    mod barriers {}
    #[doc = include_str!("../../../book/src/qp.md")]
    mod qp {}
    #[doc = include_str!("../../../book/src/filter.md")]
    mod filter {}
    #[doc = include_str!("../../../book/src/observer.md")]
    mod observer {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/mission.md")]
    mod mission {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
