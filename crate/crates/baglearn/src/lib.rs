//! Learning linear and generalized linear regressors from aggregate labels.
//!
//! Instead of one label per instance, the learner sees one label per *bag* of
//! instances. Two aggregation rules are supported: the bag label is the label
//! of one uniformly random member (multiple-instance regression), or the mean
//! of the member labels (label proportions). This crate provides
//!
//! * synthetic data generation and bag construction strategies, including
//!   optimal one-dimensional label clustering and balanced instance clustering,
//! * closed-form least squares fits and Newton fits for canonical GLM families
//!   from aggregate labels,
//! * computable error bounds for each estimator together with numeric checks
//!   of the identities they rest on,
//! * label differential privacy: noise calibration, bag label privatization,
//!   and budget accounting across pipeline stages,
//! * a seeded experiment harness that reproduces benchmark grids exactly.
//!
//! The crate is deterministic end to end: every random quantity is drawn from
//! a counter-based ChaCha stream whose seed is derived from a master seed and
//! the experiment coordinates.

pub mod bag;
pub mod bounds;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod harness;
pub mod linalg;
pub mod privacy;
pub mod rng;
pub mod strategies;
pub mod synth;

pub use bag::{AggregateLabels, Bagging};
pub use dataset::Dataset;
pub use error::BagLearnError;
