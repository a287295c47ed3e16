//! Second-order-statistics (SOS) based semi-blind channel estimation for
//! synchronous long-code DS-CDMA over frequency-selective block fading.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] draws channels, spreading codes and QPSK symbols and
//!   synthesizes the ISI-free received windows.
//! * [`sos`] assembles the moment-matching normal equations for the
//!   per-user SOS vectors `d_k = vec(g_k g_k^H)` and solves them.
//! * [`moments`] holds the real parametrization shared by the estimator and
//!   its error analysis (free variables of a Hermitian outer product, the
//!   matching cost, its gradient and Jacobians).
//! * [`analytic`] evaluates the large-system error predictions.
//! * [`estimators`] implements the training-only, moment-matching and
//!   subspace channel estimators.
//! * [`harness`] runs Monte Carlo trials and parameter sweeps and writes
//!   CSV/JSON records.
//!
//! Index conventions: vectors are stored 0-based; `vec` stacks columns, so
//! entry `(r, c)` of a `P x P` matrix lives at `r + c * P`.

pub mod analytic;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod sos;

pub use error::{Error, Result};
pub use num_complex::Complex64;
