//! Semiclassical model of a driven optical cavity filled with cold,
//! two-level-like atoms whose ground-state orientation is built up by slow
//! optical pumping.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds parameters, state, the atomic phase/absorption laws and
//!   the right-hand side of the field + orientation equations.
//! * [`eigen`] solves 3x3 eigenvalue problems through the characteristic cubic.
//! * [`steady`] finds fixed points, classifies them and traces hysteresis.
//! * [`ode`] is an adaptive Dormand-Prince integrator with dense output.
//! * [`dynamics`] runs time-domain scans and detects limit cycles.
//! * [`noise`] linearizes around a stable fixed point and evaluates output
//!   quadrature spectra in shot-noise units.
//! * [`dsp`] implements the spectrum-analyzer videofilter pipeline.

// `!(x > 0.0)` is how NaN is rejected along with the bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod dynamics;
pub mod eigen;
mod error;
pub mod model;
pub mod noise;
pub mod ode;
pub mod steady;
pub mod trace;

pub use error::{Error, Result};
pub use model::{CavityState, DrivePoint, DriveSpec, ModelParams, Schedule};
pub use num_complex::Complex64;
pub use steady::{HysteresisTrace, Stability, SteadyState};
pub use trace::{Trace, Unit};
