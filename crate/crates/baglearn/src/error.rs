//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by bag construction, fitting, bounds, and privacy routines.
#[derive(Debug, Error)]
pub enum BagLearnError {
    /// A bag has fewer members than the configured minimum.
    #[error("bag {bag_index} has {size} members, minimum is {min_size}")]
    BagTooSmall {
        bag_index: usize,
        size: usize,
        min_size: usize,
    },

    /// Bag indices must cover 0..m with no gaps.
    #[error("bag index {missing} is unused; bag indices must be contiguous from 0")]
    NonContiguousBagIndex { missing: usize },

    /// Strategies that produce exact-size bags need n divisible by the bag
    /// (or super-bag) size.
    #[error("{n} instances cannot be split into bags of exactly {divisor}")]
    NotDivisible { n: usize, divisor: usize },

    /// Fewer instances than the minimum bag size.
    #[error("{n} instances cannot form any bag of size at least {k}")]
    TooFewPoints { n: usize, k: usize },

    /// The design (or centroid) matrix does not have full column rank, so the
    /// normal equations have no unique solution.
    #[error("matrix is rank deficient: rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    /// An eigenvalue computation found a spectrum too close to singular to
    /// report a meaningful condition number.
    #[error("spectrum is degenerate: min eigenvalue {min_eig:e} vs max {max_eig:e}")]
    DegenerateSpectrum { min_eig: f64, max_eig: f64 },

    /// Feature covariance is numerically singular, so whitening is undefined.
    #[error("feature covariance is numerically singular (min eigenvalue {min_eig:e})")]
    SingularCovariance { min_eig: f64 },

    /// Bag labels were already privatized once; adding noise again would
    /// spend budget that the ledger has not accounted for.
    #[error("bag labels are already privatized")]
    AlreadyPrivatized,

    /// A label exceeds the clipping bound, so the stated sensitivity does not
    /// hold and the noise scale would not give the claimed guarantee.
    #[error("label {value} at index {index} exceeds clip bound {bound}")]
    UnclippedLabels {
        index: usize,
        value: f64,
        bound: f64,
    },

    /// Inputs whose dimensions must agree do not.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// An iterative fit did not reach its tolerance within the iteration cap.
    #[error("{method} did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// The objective is flat along the inspected segment, so the strong
    /// convexity error bound is undefined.
    #[error("objective is not strongly convex on the segment (min curvature {min_curvature:e})")]
    NonStronglyConvex { min_curvature: f64 },

    /// A parameter value is outside its valid range.
    #[error("invalid parameter: {context}")]
    InvalidParameter { context: String },

    /// A text artifact (dataset, bagging, config, manifest) failed to parse.
    #[error("parse error at line {line}: {context}")]
    Parse { line: usize, context: String },

    /// Underlying I/O failure while reading or writing an artifact.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BagLearnError {
    /// Convenience constructor for dimension mismatches.
    pub fn dim(context: impl Into<String>) -> Self {
        BagLearnError::DimensionMismatch {
            context: context.into(),
        }
    }

    /// Convenience constructor for invalid parameters.
    pub fn param(context: impl Into<String>) -> Self {
        BagLearnError::InvalidParameter {
            context: context.into(),
        }
    }
}
