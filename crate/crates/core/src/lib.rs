//! Symbol-level precoding for self-interference cancellation in a
//! full-duplex integrated sensing and communication (ISAC) base station.
//!
//! The crate is organised bottom-up:
//!
//! * [`statkit`] holds the scalar distribution kernels (2-DoF chi-squared,
//!   first-order Marcum-Q), bracketing root finders and the KS distance.
//! * [`signal_model`] builds the OFDM/MIMO objects: steering vectors, the
//!   unitary conjugate DFT, delay operators, channel and symbol samplers and
//!   the radar echo synthesiser.
//! * [`detector`] implements the prewhitened GLRT, DoA grid search and the
//!   closed-form detection probability.
//! * [`solver`] solves the detection-maximising precoding problem with a
//!   quadratic-penalty outer loop around a three-block coordinate descent.
//! * [`harness`] drives seeded Monte Carlo experiments and writes tables.
//! * [`oracle`] contains slow, structure-free reference computations used by
//!   the test-suite and by the `validate` experiment.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod signal_model;
pub mod solver;
pub mod statkit;

pub use error::{Error, Result};

/// Complex double used throughout.
pub type C64 = num_complex::Complex<f64>;
