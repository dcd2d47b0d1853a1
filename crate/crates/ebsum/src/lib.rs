//! Extended Bernoulli sums: a Poisson variable plus independent Bernoulli
//! variables with varying success probabilities.
//!
//! The crate computes exact probability functions by two independent engines
//! (direct convolution and extended elementary symmetric functions), extracts
//! modal structure (modes, peak height, peak skewness, medians), checks the
//! mean-mode localisation rule and its finitary geometry, scans parametric
//! families for cross modality (every likelihood maximiser lands on a mode),
//! and solves the minimal-mean transport problem of shifting the leading mode
//! up by one.

pub mod darroch;
pub mod ebs_core;
pub mod families;
pub mod modal_analysis;
pub mod transport;

/// Default truncation budget for PMF computations.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Default relative tolerance for declaring adjacent probabilities tied.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("truncation budget exhausted: {0}")]
    Budget(String),
    #[error("flat-top: crossing undefined")]
    FlatTop,
    #[error("no two-Bernoulli improvement")]
    NoTwoBernoulliImprovement,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
