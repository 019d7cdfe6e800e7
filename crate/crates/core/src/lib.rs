//! Linearized quantum dynamics of a driven optomechanical cavity whose drive
//! amplitude is modulated near the mirror frequency.
//!
//! The mirror's quadrature covariance is propagated jointly with the mean
//! fields to detect parametrically generated squeezing. Reduced closed-form
//! models of the effective parametric oscillator are provided alongside as
//! oracles and threshold estimators.
//!
//! Modules:
//! - [`model`]: parameters, drive schedule, mean-field equations.
//! - [`linearized`]: drift and noise matrices, covariance propagation, squeezing metrics.
//! - [`reduced`]: adiabatic elimination and parametric-oscillator closed forms.
//! - [`integrator`]: RK4 and Dormand–Prince stepping.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod integrator;
pub mod linearized;
pub mod model;
pub mod reduced;

pub use error::{Error, Result};
pub use integrator::{IntegrationControl, StepMode};
pub use linearized::{
    optimal_squeezing_angle, propagate, quadrature_variance, squeezing_db, CovarianceState, InitialState, Record,
    RecordKind, Trajectory,
};
pub use model::{DriveSpec, MeanFieldState, SystemParams};
pub use reduced::ReducedParams;
