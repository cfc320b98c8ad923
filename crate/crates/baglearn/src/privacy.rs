//! Label privacy: clipping, Gaussian noise calibration, private label
//! clustering, and end-to-end private bagging pipelines with budget
//! accounting.
//!
//! Every mechanism here protects the labels only; features are assumed
//! public. Noise scales follow the Gaussian-mechanism calibrations for the
//! two release patterns this crate uses: a sampled member label (sensitivity
//! 2R) and a bag mean (sensitivity 2R/k).

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bag::{AggregateKind, AggregateLabels, Bagging};
use crate::dataset::Dataset;
use crate::error::BagLearnError;
use crate::estimators::{make_bag_labels, LossKind};
use crate::strategies::{instance_kmeans_balanced, label_kmeans_equal};

/// Label-privacy budget and the label clipping radius the mechanisms assume.
#[derive(Debug, Clone, Copy)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Labels must lie in [−clip_bound, clip_bound] before any mechanism
    /// sees them.
    pub clip_bound: f64,
}

impl PrivacyParams {
    pub fn validate(&self) -> Result<(), BagLearnError> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(BagLearnError::param("epsilon must be positive"));
        }
        if self.delta.is_nan() || self.delta <= 0.0 || self.delta >= 1.0 {
            return Err(BagLearnError::param("delta must lie strictly in (0, 1)"));
        }
        if self.clip_bound.is_nan() || self.clip_bound <= 0.0 {
            return Err(BagLearnError::param("clip_bound must be positive"));
        }
        Ok(())
    }
}

/// Projects every label onto [−r, r].
pub fn clip_labels(y: ArrayView1<f64>, r: f64) -> Result<Array1<f64>, BagLearnError> {
    if r.is_nan() || r <= 0.0 {
        return Err(BagLearnError::param("clip bound must be positive"));
    }
    Ok(y.mapv(|v| v.clamp(-r, r)))
}

/// Per-label noise scale `alpha` and the per-bag noise scale `alpha / k`
/// that subsampling amplification buys once bags have k members.
#[derive(Debug, Clone, Copy)]
pub struct NoiseScale {
    pub alpha: f64,
    pub bag_label_std: f64,
}

/// Noise calibration for the sampled-member release pattern:
/// `α² = 16R²·ln(2.5/δ)/ε²`. The constant already pays for splitting the
/// budget across the clustering query and the label query, which is why it
/// is four times the bag-mean calibration.
pub fn noise_scale_instance_mir(p: &PrivacyParams, k: usize) -> Result<NoiseScale, BagLearnError> {
    p.validate()?;
    if k == 0 {
        return Err(BagLearnError::param("k must be at least 1"));
    }
    let r = p.clip_bound;
    let alpha_sq = 16.0 * r * r * (2.5 / p.delta).ln() / (p.epsilon * p.epsilon);
    let alpha = alpha_sq.sqrt();
    Ok(NoiseScale {
        alpha,
        bag_label_std: alpha / k as f64,
    })
}

/// Noise calibration for the bag-mean release pattern:
/// `α² = 4R²·ln(1.25/δ)/ε²`, spent in one query because the bagging itself
/// never looks at labels.
pub fn noise_scale_bag_llp(p: &PrivacyParams, k: usize) -> Result<NoiseScale, BagLearnError> {
    p.validate()?;
    if k == 0 {
        return Err(BagLearnError::param("k must be at least 1"));
    }
    let r = p.clip_bound;
    let alpha_sq = 4.0 * r * r * (1.25 / p.delta).ln() / (p.epsilon * p.epsilon);
    let alpha = alpha_sq.sqrt();
    Ok(NoiseScale {
        alpha,
        bag_label_std: alpha / k as f64,
    })
}

/// Adds i.i.d. Gaussian noise of the given standard deviation to each bag
/// label and records the fact on the result.
pub fn privatize_bag_labels<R: Rng>(
    agg: &AggregateLabels,
    bag_label_std: f64,
    rng: &mut R,
) -> Result<AggregateLabels, BagLearnError> {
    if agg.privatized {
        return Err(BagLearnError::AlreadyPrivatized);
    }
    if bag_label_std < 0.0 {
        return Err(BagLearnError::param("noise std must be nonnegative"));
    }
    let values = agg
        .values
        .mapv(|v| v + bag_label_std * rng.sample::<f64, _>(StandardNormal));
    Ok(AggregateLabels {
        values,
        kind: agg.kind,
        privatized: true,
        noise_std: bag_label_std,
    })
}

/// Label clustering through a noise screen: adds Gaussian(0, α²) noise to
/// each label in index order, then clusters the noisy copies into equal
/// size-k bags. The output depends on the noisy labels alone, so any
/// further use of the bagging is post-processing and costs no extra budget.
pub fn private_label_kmeans<R: Rng>(
    y: ArrayView1<f64>,
    k: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Bagging, BagLearnError> {
    if alpha < 0.0 {
        return Err(BagLearnError::param("alpha must be nonnegative"));
    }
    let noisy = y.mapv(|v| v + alpha * rng.sample::<f64, _>(StandardNormal));
    label_kmeans_equal(noisy.view(), k)
}

/// One mechanism invocation: what ran, what it cost, and how much noise it
/// injected.
#[derive(Debug, Clone)]
pub struct LedgerEntry {
    pub mechanism: String,
    pub epsilon: f64,
    pub delta: f64,
    pub noise_std: f64,
}

/// Running account of privacy spend under basic composition. Charging past
/// the declared budget is an error, so a pipeline that type-checks its
/// charges cannot silently overspend.
#[derive(Debug, Clone)]
pub struct BudgetLedger {
    epsilon_budget: f64,
    delta_budget: f64,
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new(p: &PrivacyParams) -> Self {
        BudgetLedger {
            epsilon_budget: p.epsilon,
            delta_budget: p.delta,
            entries: Vec::new(),
        }
    }

    /// Records one mechanism invocation, failing if the running totals would
    /// pass the declared budget (tiny slack covers float summation).
    pub fn charge(
        &mut self,
        mechanism: &str,
        epsilon: f64,
        delta: f64,
        noise_std: f64,
    ) -> Result<(), BagLearnError> {
        let (spent_eps, spent_delta) = self.spent();
        if spent_eps + epsilon > self.epsilon_budget * (1.0 + 1e-12)
            || spent_delta + delta > self.delta_budget * (1.0 + 1e-12)
        {
            return Err(BagLearnError::param(format!(
                "mechanism {mechanism} would overspend the privacy budget: \
                 ({},{}) spent, ({epsilon},{delta}) requested, ({},{}) allowed",
                spent_eps, spent_delta, self.epsilon_budget, self.delta_budget
            )));
        }
        self.entries.push(LedgerEntry {
            mechanism: mechanism.to_string(),
            epsilon,
            delta,
            noise_std,
        });
        Ok(())
    }

    /// Total (ε, δ) consumed so far under basic composition.
    pub fn spent(&self) -> (f64, f64) {
        let eps = self.entries.iter().map(|e| e.epsilon).sum();
        let delta = self.entries.iter().map(|e| e.delta).sum();
        (eps, delta)
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Human-readable account of the run: budget, each mechanism with its
    /// cost and noise, and the composed total.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "budget epsilon={} delta={}\n",
            self.epsilon_budget, self.delta_budget
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "mechanism={} epsilon={} delta={} noise_std={}\n",
                e.mechanism, e.epsilon, e.delta, e.noise_std
            ));
        }
        let (eps, delta) = self.spent();
        out.push_str(&format!("spent epsilon={} delta={}\n", eps, delta));
        out
    }
}

/// How a private sampled-label pipeline spends its budget. Applies to both
/// MIR losses; the released artifact (bagging, noisy sampled bag labels) is
/// the same either way, only its construction differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MirRoute {
    /// Bag by feature clustering (no label access) and spend the whole
    /// budget on the released labels.
    #[default]
    LabelFree,
    /// Bag by noisy label clustering, splitting the budget in half.
    LabelClustering,
}

/// A private bagging plus its released labels and the budget ledger that
/// proves the spend.
#[derive(Debug, Clone)]
pub struct PrivateRun {
    pub bagging: Bagging,
    pub labels: AggregateLabels,
    pub ledger: BudgetLedger,
}

/// Runs the private pipeline for one loss kind with its default route:
/// label clustering for the instance-level loss (the pipeline the noisy
/// clustering analysis is built around), label-free for the aggregate loss.
pub fn private_pipeline<R: Rng>(
    ds: &Dataset,
    k: usize,
    loss_kind: LossKind,
    p: &PrivacyParams,
    rng: &mut R,
) -> Result<PrivateRun, BagLearnError> {
    let route = match loss_kind {
        LossKind::InstanceMir => MirRoute::LabelClustering,
        _ => MirRoute::LabelFree,
    };
    private_pipeline_routed(ds, k, loss_kind, route, p, rng)
}

/// Private bagging and label release for one loss kind.
///
/// Both MIR losses release one noisy sampled label per bag and take `route`:
/// noisy label clustering at half budget plus labels at the other half, or
/// free feature clustering with the whole budget on the labels. Bag-mean
/// ignores `route`: feature clustering is free and the budget buys the
/// noisy bag means.
pub fn private_pipeline_routed<R: Rng>(
    ds: &Dataset,
    k: usize,
    loss_kind: LossKind,
    route: MirRoute,
    p: &PrivacyParams,
    rng: &mut R,
) -> Result<PrivateRun, BagLearnError> {
    p.validate()?;
    let r = p.clip_bound;
    for (i, &v) in ds.labels.iter().enumerate() {
        if v.abs() > r {
            return Err(BagLearnError::UnclippedLabels {
                index: i,
                value: v,
                bound: r,
            });
        }
    }
    let mut ledger = BudgetLedger::new(p);
    let (bagging, labels) = match loss_kind {
        LossKind::InstanceMir | LossKind::AggMir => match route {
            MirRoute::LabelClustering => cluster_then_release(ds, k, p, &mut ledger, rng)?,
            MirRoute::LabelFree => {
                // The sampled-member calibration is built for a half budget;
                // reusing it for the whole budget only adds slack.
                let scale = noise_scale_instance_mir(p, k)?;
                let bagging = instance_kmeans_balanced(ds.features.view(), k, rng)?;
                let clean = make_bag_labels(ds, &bagging, AggregateKind::MirSample, rng)?;
                let labels = privatize_bag_labels(&clean, scale.bag_label_std, rng)?;
                ledger.charge(
                    "sampled-label-noise",
                    p.epsilon,
                    p.delta,
                    scale.bag_label_std,
                )?;
                (bagging, labels)
            }
        },
        LossKind::BagLlp => {
            let scale = noise_scale_bag_llp(p, k)?;
            let bagging = instance_kmeans_balanced(ds.features.view(), k, rng)?;
            let clean = make_bag_labels(ds, &bagging, AggregateKind::LlpMean, rng)?;
            let labels = privatize_bag_labels(&clean, scale.bag_label_std, rng)?;
            ledger.charge("bag-mean-noise", p.epsilon, p.delta, scale.bag_label_std)?;
            (bagging, labels)
        }
        LossKind::Ols => {
            return Err(BagLearnError::param(
                "the plain least-squares baseline has no private pipeline",
            ));
        }
    };
    Ok(PrivateRun {
        bagging,
        labels,
        ledger,
    })
}

/// Shared shape of the half-and-half pipelines: noisy label clustering, then
/// noisy sampled labels.
fn cluster_then_release<R: Rng>(
    ds: &Dataset,
    k: usize,
    p: &PrivacyParams,
    ledger: &mut BudgetLedger,
    rng: &mut R,
) -> Result<(Bagging, AggregateLabels), BagLearnError> {
    let scale = noise_scale_instance_mir(p, k)?;
    let bagging = private_label_kmeans(ds.labels.view(), k, scale.alpha, rng)?;
    ledger.charge(
        "noisy-label-clustering",
        p.epsilon / 2.0,
        p.delta / 2.0,
        scale.alpha,
    )?;
    let clean = make_bag_labels(ds, &bagging, AggregateKind::MirSample, rng)?;
    let labels = privatize_bag_labels(&clean, scale.bag_label_std, rng)?;
    ledger.charge(
        "sampled-label-noise",
        p.epsilon / 2.0,
        p.delta / 2.0,
        scale.bag_label_std,
    )?;
    Ok((bagging, labels))
}
