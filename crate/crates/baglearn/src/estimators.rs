//! Closed-form least-squares estimators for the three aggregate losses,
//! plus bag-label formation.
//!
//! All three estimators reduce to least squares on transformed data. The
//! instance-level MIR loss broadcasts each bag's released label to every
//! member and fits X against that, which collapses to the normal equations
//! XᵀXθ = Σ_l ȳ_l Σ_{i∈B_l} x_i. The bag-level LLP and aggregate MIR
//! losses both regress the released bag labels on the bag centroids SX;
//! they differ only in how ȳ was formed.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;

use crate::bag::{sample_attribution, AggregateKind, AggregateLabels, Bagging};
use crate::dataset::Dataset;
use crate::error::BagLearnError;
use crate::linalg::TallQr;

/// Which loss produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    InstanceMir,
    BagLlp,
    AggMir,
    Ols,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::InstanceMir => "instance-mir",
            LossKind::BagLlp => "bag-llp",
            LossKind::AggMir => "agg-mir",
            LossKind::Ols => "ols",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = BagLearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "instance-mir" => Ok(LossKind::InstanceMir),
            "bag-llp" => Ok(LossKind::BagLlp),
            "agg-mir" => Ok(LossKind::AggMir),
            "ols" => Ok(LossKind::Ols),
            other => Err(BagLearnError::param(format!(
                "unknown loss {other:?} (expected instance-mir, bag-llp, agg-mir, or ols)"
            ))),
        }
    }
}

/// A fitted parameter vector tagged with the loss that produced it.
#[derive(Debug, Clone)]
pub struct ModelEstimate {
    pub theta_hat: Array1<f64>,
    pub loss_kind: LossKind,
}

/// Forms the released per-bag labels: one uniformly sampled member label
/// for MIR, the member mean for LLP.
pub fn make_bag_labels<R: Rng>(
    ds: &Dataset,
    b: &Bagging,
    kind: AggregateKind,
    rng: &mut R,
) -> Result<AggregateLabels, BagLearnError> {
    if b.n() != ds.n() {
        return Err(BagLearnError::dim(format!(
            "bagging covers {} instances, dataset has {}",
            b.n(),
            ds.n()
        )));
    }
    let values = match kind {
        AggregateKind::MirSample => {
            let draw = sample_attribution(b, rng);
            Array1::from_iter(draw.chosen.iter().map(|&i| ds.labels[i]))
        }
        AggregateKind::LlpMean => b.bag_means(ds.labels.view()),
    };
    Ok(AggregateLabels::new(values, kind))
}

fn check_labels(
    b: &Bagging,
    agg: &AggregateLabels,
    want: AggregateKind,
) -> Result<(), BagLearnError> {
    if agg.kind != want {
        return Err(BagLearnError::param(format!(
            "estimator needs {want:?} labels, got {:?}",
            agg.kind
        )));
    }
    if agg.len() != b.m() {
        return Err(BagLearnError::dim(format!(
            "{} aggregate labels for {} bags",
            agg.len(),
            b.m()
        )));
    }
    Ok(())
}

/// Minimizes the instance-level MIR loss: least squares of X against the
/// bag labels broadcast to members, solved as XᵀXθ = Σ_l ȳ_l Σ_{i∈B_l} x_i
/// so the n-length broadcast vector is never materialized.
pub fn fit_instance_mir(
    x: ArrayView2<f64>,
    b: &Bagging,
    agg: &AggregateLabels,
) -> Result<ModelEstimate, BagLearnError> {
    check_labels(b, agg, AggregateKind::MirSample)?;
    if x.nrows() != b.n() {
        return Err(BagLearnError::dim(format!(
            "{} feature rows for {} instances",
            x.nrows(),
            b.n()
        )));
    }
    let bag_sums = b.bag_row_sums(x);
    let v = bag_sums.t().dot(&agg.values);
    let theta_hat = TallQr::new(x).solve_gram(v.view())?;
    Ok(ModelEstimate {
        theta_hat,
        loss_kind: LossKind::InstanceMir,
    })
}

fn fit_on_centroids(
    x: ArrayView2<f64>,
    b: &Bagging,
    agg: &AggregateLabels,
    loss_kind: LossKind,
) -> Result<ModelEstimate, BagLearnError> {
    if x.nrows() != b.n() {
        return Err(BagLearnError::dim(format!(
            "{} feature rows for {} instances",
            x.nrows(),
            b.n()
        )));
    }
    let sx = b.bag_row_means(x);
    let theta_hat = TallQr::new(sx.view()).solve(agg.values.view())?;
    Ok(ModelEstimate {
        theta_hat,
        loss_kind,
    })
}

/// Minimizes the bag-level LLP loss: least squares of the bag centroids SX
/// against the mean bag labels.
pub fn fit_bag_llp(
    x: ArrayView2<f64>,
    b: &Bagging,
    agg: &AggregateLabels,
) -> Result<ModelEstimate, BagLearnError> {
    check_labels(b, agg, AggregateKind::LlpMean)?;
    fit_on_centroids(x, b, agg, LossKind::BagLlp)
}

/// Minimizes the aggregate MIR loss: least squares of the bag centroids SX
/// against the sampled bag labels.
pub fn fit_agg_mir(
    x: ArrayView2<f64>,
    b: &Bagging,
    agg: &AggregateLabels,
) -> Result<ModelEstimate, BagLearnError> {
    check_labels(b, agg, AggregateKind::MirSample)?;
    fit_on_centroids(x, b, agg, LossKind::AggMir)
}

/// Ordinary least squares on instance labels, the no-aggregation baseline.
pub fn fit_ols(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<ModelEstimate, BagLearnError> {
    let theta_hat = TallQr::new(x).solve(y)?;
    Ok(ModelEstimate {
        theta_hat,
        loss_kind: LossKind::Ols,
    })
}

/// Squared parameter error ‖θ̂ − θ*‖².
pub fn estimation_error(
    est: &ModelEstimate,
    theta_star: ArrayView1<f64>,
) -> Result<f64, BagLearnError> {
    if est.theta_hat.len() != theta_star.len() {
        return Err(BagLearnError::dim(format!(
            "estimate has {} entries, theta_star has {}",
            est.theta_hat.len(),
            theta_star.len()
        )));
    }
    Ok(est
        .theta_hat
        .iter()
        .zip(theta_star.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum())
}
