//! Adversarial neural-network solver for elliptic obstacle problems.
//!
//! The obstacle problem is rewritten as a minmax problem over a solution
//! network and a test-function network via a regularised gap function, and
//! solved by alternating gradient descent ascent.  A projected-SOR finite
//! difference solver serves as an independent reference.

pub mod autodiff;
pub mod config;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod optimizer;
pub mod oracle;
pub mod problems;
pub mod sampler;
pub mod scalar;
pub mod trainer;

pub use scalar::Scalar;

/// Scalar type used by the shipped solvers and the CLI.
pub type Real = f64;
