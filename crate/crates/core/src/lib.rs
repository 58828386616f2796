//! Numerical laboratory for L^p polarity.
//!
//! The crate computes soft (L^p) Legendre transforms of convex functions,
//! the associated Mahler integrals `M_p(f) = V(f) V(f^{*,p})`, Santalo
//! points (the translation minimizing the Mahler integral), and the
//! evolution of log-concave functions under the Ornstein-Uhlenbeck
//! (Fokker-Planck) semigroup, together with the special-function
//! machinery (modified Bessel functions, Gamma/Beta integrals) needed for
//! the closed forms of balls and simplices.
//!
//! Everything is desk-scale numerics: quadrature-backed evaluation with
//! closed-form fast paths, cross-checked against independent oracles in
//! the test suite. All integrands are accumulated in the log domain so
//! values spanning hundreds of nats stay finite.

pub mod cli;
pub mod extreal;
pub mod flow;
pub mod functions;
pub mod integrate;
pub mod mahler;
pub mod report;
pub mod santalo;
pub mod specfun;
pub mod transform;
pub mod verify;

use thiserror::Error;

/// Crate-wide error type. `Divergent` and `ZeroVolume` are *signals*
/// (an integral blew up / underflowed), the rest are caller mistakes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is numerically singular (|det| < {0:e})")]
    SingularMatrix(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("integral diverges (estimate keeps growing under radius doubling)")]
    Divergent,
    #[error("integral underflows to zero (volume below 1e-300)")]
    ZeroVolume,
    #[error("operation unsupported for this function kind: {0}")]
    Unsupported(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("optimizer did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("affine lower bound violated at a validation sample: f({at:?}) = {value} < {bound}")]
    BoundViolated { at: Vec<f64>, value: f64, bound: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
