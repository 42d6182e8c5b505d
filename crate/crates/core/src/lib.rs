//! Alternating least squares for low-rank matrix sensing.
//!
//! The library recovers a rank-one (or low-rank) matrix from Gaussian
//! linear measurements by alternating exact least-squares solves over the
//! two factors, starting from a random unit vector or from a spectral
//! estimate. Alongside the solver it ships:
//!
//! - deterministic counter-based random streams ([`stream`]) so every
//!   experiment is reproducible from one master seed,
//! - the measurement operator with dense and streamed storage, its
//!   adjoint, the resampled auxiliary operator, and the canonical block
//!   split ([`sensing`]),
//! - convergence diagnostics: parallel/perpendicular decompositions,
//!   coupled auxiliary runs with closeness certificates, sampled
//!   restricted-isometry estimates, and concentration checks
//!   ([`diagnostics`]),
//! - a Monte-Carlo harness for trajectory logging and phase-transition
//!   sweeps with CSV and SVG artifacts ([`experiments`]).

pub mod als;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod init;
mod linalg;
pub mod plot;
pub mod sensing;
pub mod stream;

pub use error::{Error, Result};

/// Library version recorded in every output-file header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
