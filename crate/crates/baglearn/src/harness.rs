//! Seeded experiment grids: config parsing, cell execution, CSV output.
//!
//! A config describes one benchmark table: a synthetic data recipe, a bag
//! size, the losses and bagging methods to cross, an optional privacy grid,
//! and a replication count. [`run_table`] executes every
//! (method, ε, run, loss) cell with a seed derived from the master seed and
//! the cell coordinates, so any cell can be reproduced in isolation and
//! adding or removing a method never shifts another method's random stream.
//! Within one run the dataset and bagging are shared across losses; only the
//! released aggregate labels differ.
//!
//! Failures are confined to their cell: a row whose pipeline errors is
//! marked `failed` in the CSV while every other row still runs.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;

use crate::bag::{AggregateKind, Bagging};
use crate::bounds;
use crate::dataset::Dataset;
use crate::error::BagLearnError;
use crate::estimators::{
    estimation_error, fit_agg_mir, fit_bag_llp, fit_instance_mir, fit_ols, make_bag_labels,
    LossKind, ModelEstimate,
};
use crate::privacy::{clip_labels, private_pipeline_routed, MirRoute, PrivacyParams};
use crate::rng::{derive_run_seed, rng_from_seed};
use crate::strategies::{
    instance_kmeans_balanced, label_kmeans_equal, label_kmeans_minsize, random_bagging,
};
use crate::synth::{generate_dataset, DataFamily, DataSpec};

/// Bagging strategies the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaggingMethod {
    /// Balanced k-means on the feature rows; label-agnostic.
    InstanceKmeans,
    /// Optimal 1-d clustering of the labels; label-dependent.
    LabelKmeans,
    /// Uniformly random equal bags.
    Random,
}

impl BaggingMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaggingMethod::InstanceKmeans => "instance-kmeans",
            BaggingMethod::LabelKmeans => "label-kmeans",
            BaggingMethod::Random => "random",
        }
    }
}

impl fmt::Display for BaggingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaggingMethod {
    type Err = BagLearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "instance-kmeans" => Ok(BaggingMethod::InstanceKmeans),
            "label-kmeans" => Ok(BaggingMethod::LabelKmeans),
            "random" => Ok(BaggingMethod::Random),
            other => Err(BagLearnError::param(format!(
                "unknown bagging method {other:?} (expected instance-kmeans, \
                 label-kmeans, or random)"
            ))),
        }
    }
}

/// Privacy leg of a config: an ε grid sharing one δ and one clip bound.
#[derive(Debug, Clone)]
pub struct PrivacyGrid {
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub clip_bound: f64,
}

/// One benchmark table: data recipe × bag size × losses × methods × ε grid,
/// replicated `runs` times from `master_seed`.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub k: usize,
    pub losses: Vec<LossKind>,
    pub methods: Vec<BaggingMethod>,
    pub privacy: Option<PrivacyGrid>,
    pub runs: usize,
    pub master_seed: u64,
    pub emit_bounds: bool,
    /// Reuse one dataset for every cell instead of resampling X and θ* per
    /// run.
    pub fixed_data: bool,
    /// Let label k-means choose bag sizes in [k, 2k) instead of exactly k.
    pub min_size: bool,
}

impl ExperimentConfig {
    /// Parses the flat `key = value` config format. Lines that are blank or
    /// start with `#` are skipped; list values are comma-separated. `n`,
    /// `d`, and `k` are required, and `clip_bound` is required whenever
    /// `epsilon_grid` is present (the privacy analysis is meaningless
    /// without a declared label range).
    pub fn parse(text: &str) -> Result<Self, BagLearnError> {
        let mut family = DataFamily::Isotropic;
        let mut n = None;
        let mut d = None;
        let mut sigma = 0.5;
        let mut k = None;
        let mut losses = vec![LossKind::InstanceMir];
        let mut methods = vec![BaggingMethod::Random];
        let mut runs = 1usize;
        let mut master_seed = 0u64;
        let mut emit_bounds = false;
        let mut fixed_data = false;
        let mut min_size = false;
        let mut epsilons: Option<Vec<f64>> = None;
        let mut delta = 1e-5;
        let mut clip_bound: Option<f64> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.trim();
            if stripped.is_empty() || stripped.starts_with('#') {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or(BagLearnError::Parse {
                line,
                context: format!("expected key = value, got {stripped:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let fail = |what: &str| BagLearnError::Parse {
                line,
                context: format!("{key} = {value:?} is not {what}"),
            };
            match key {
                "family" => family = value.parse().map_err(|_| fail("a data family"))?,
                "n" => n = Some(value.parse().map_err(|_| fail("a positive integer"))?),
                "d" => d = Some(value.parse().map_err(|_| fail("a positive integer"))?),
                "sigma" => sigma = value.parse().map_err(|_| fail("a number"))?,
                "k" => k = Some(value.parse().map_err(|_| fail("a positive integer"))?),
                "losses" => {
                    losses = parse_list(value).map_err(|_| fail("a list of losses"))?;
                }
                "methods" => {
                    methods = parse_list(value).map_err(|_| fail("a list of methods"))?;
                }
                "runs" => runs = value.parse().map_err(|_| fail("a positive integer"))?,
                "seed" => master_seed = value.parse().map_err(|_| fail("a 64-bit seed"))?,
                "emit_bounds" => emit_bounds = value.parse().map_err(|_| fail("a boolean"))?,
                "fixed_data" => fixed_data = value.parse().map_err(|_| fail("a boolean"))?,
                "min_size" => min_size = value.parse().map_err(|_| fail("a boolean"))?,
                "epsilon_grid" => {
                    epsilons = Some(parse_list(value).map_err(|_| fail("a list of numbers"))?);
                }
                "delta" => delta = value.parse().map_err(|_| fail("a number"))?,
                "clip_bound" => {
                    clip_bound = Some(value.parse().map_err(|_| fail("a number"))?);
                }
                other => {
                    return Err(BagLearnError::Parse {
                        line,
                        context: format!("unknown config key {other:?}"),
                    });
                }
            }
        }

        let require = |name: &str, v: Option<usize>| {
            v.ok_or_else(|| BagLearnError::param(format!("config is missing {name}")))
        };
        let privacy = match epsilons {
            None => None,
            Some(epsilons) => Some(PrivacyGrid {
                epsilons,
                delta,
                clip_bound: clip_bound.ok_or_else(|| {
                    BagLearnError::param("epsilon_grid needs an explicit clip_bound")
                })?,
            }),
        };
        let cfg = ExperimentConfig {
            data: DataSpec {
                n: require("n", n)?,
                d: require("d", d)?,
                family,
                sigma,
                seed: master_seed,
            },
            k: require("k", k)?,
            losses,
            methods,
            privacy,
            runs,
            master_seed,
            emit_bounds,
            fixed_data,
            min_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BagLearnError> {
        self.data.validate()?;
        if self.runs == 0 {
            return Err(BagLearnError::param("runs must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(BagLearnError::param("methods must be nonempty"));
        }
        if self.losses.is_empty() {
            return Err(BagLearnError::param("losses must be nonempty"));
        }
        if self.k == 0 {
            return Err(BagLearnError::param("k must be at least 1"));
        }
        // only min-size label k-means tolerates a ragged split
        let needs_exact = !self.min_size
            || self
                .methods
                .iter()
                .any(|m| *m != BaggingMethod::LabelKmeans);
        if needs_exact && !self.data.n.is_multiple_of(self.k) {
            return Err(BagLearnError::NotDivisible {
                n: self.data.n,
                divisor: self.k,
            });
        }
        if let Some(grid) = &self.privacy {
            if grid.epsilons.is_empty() {
                return Err(BagLearnError::param("epsilon_grid must be nonempty"));
            }
            for &eps in &grid.epsilons {
                PrivacyParams {
                    epsilon: eps,
                    delta: grid.delta,
                    clip_bound: grid.clip_bound,
                }
                .validate()?;
            }
        }
        Ok(())
    }
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, <T as FromStr>::Err> {
    value.split(',').map(|v| v.trim().parse()).collect()
}

/// Measurements from one successful cell.
#[derive(Debug, Clone, Copy)]
pub struct RunOutcome {
    /// Squared parameter error ‖θ̂ − θ*‖².
    pub error: f64,
    /// The loss's a priori bound, when requested and defined for the cell.
    pub bound: Option<f64>,
}

/// One grid cell: full provenance plus the measurement or the failure text.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: BaggingMethod,
    pub epsilon: Option<f64>,
    pub run: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub outcome: Result<RunOutcome, String>,
}

/// All records of one config's grid, in deterministic order.
#[derive(Debug, Clone)]
pub struct ResultTable {
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
}

/// Per-cell aggregate over runs.
#[derive(Debug, Clone, Copy)]
pub struct CellSummary {
    pub method: BaggingMethod,
    pub epsilon: Option<f64>,
    pub loss: LossKind,
    /// Mean and sample std over successful runs; NaN when every run failed.
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    pub failed: usize,
}

/// Sample mean and standard deviation with the n − 1 denominator; a single
/// value reports zero spread.
pub fn summarize(values: &[f64]) -> Result<(f64, f64), BagLearnError> {
    if values.is_empty() {
        return Err(BagLearnError::param("cannot summarize an empty cell"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

impl ResultTable {
    /// CSV with one row per (method, ε, run, loss) cell. Columns:
    /// `family,n,d,sigma,k,method,epsilon,run,seed,loss,error` plus `bound`
    /// when the config asked for bounds. Failed cells carry `failed` in the
    /// error column. Output is byte-identical across runs of the same
    /// config.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,n,d,sigma,k,method,epsilon,run,seed,loss,error");
        if self.config.emit_bounds {
            out.push_str(",bound");
        }
        out.push('\n');
        let prefix = format!(
            "{},{},{},{},{}",
            self.config.data.family,
            self.config.data.n,
            self.config.data.d,
            self.config.data.sigma,
            self.config.k
        );
        for rec in &self.records {
            let eps = match rec.epsilon {
                Some(e) => format!("{e}"),
                None => "none".to_string(),
            };
            let error = match &rec.outcome {
                Ok(o) => format!("{}", o.error),
                Err(_) => "failed".to_string(),
            };
            out.push_str(&format!(
                "{prefix},{},{eps},{},{},{},{error}",
                rec.method,
                rec.run,
                rec.seed,
                rec.loss
            ));
            if self.config.emit_bounds {
                out.push(',');
                if let Ok(RunOutcome {
                    bound: Some(bound), ..
                }) = rec.outcome
                {
                    out.push_str(&format!("{bound}"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Aggregates runs per (method, ε, loss) cell, in first-appearance
    /// order.
    pub fn summaries(&self) -> Vec<CellSummary> {
        let mut keys: Vec<(BaggingMethod, Option<u64>, LossKind)> = Vec::new();
        let mut cells: Vec<(Vec<f64>, usize, Option<f64>)> = Vec::new();
        for rec in &self.records {
            let key = (rec.method, rec.epsilon.map(f64::to_bits), rec.loss);
            let slot = match keys.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    keys.push(key);
                    cells.push((Vec::new(), 0, rec.epsilon));
                    cells.len() - 1
                }
            };
            match &rec.outcome {
                Ok(o) => cells[slot].0.push(o.error),
                Err(_) => cells[slot].1 += 1,
            }
        }
        keys.iter()
            .zip(cells.iter())
            .map(|(&(method, _, loss), (values, failed, epsilon))| {
                let (mean, std) = summarize(values).unwrap_or((f64::NAN, f64::NAN));
                CellSummary {
                    method,
                    epsilon: *epsilon,
                    loss,
                    mean,
                    std,
                    runs: values.len(),
                    failed: *failed,
                }
            })
            .collect()
    }
}

/// Executes every cell of the config's grid.
///
/// Per (method, ε, run): a fresh dataset from the derived seed (or the
/// shared one under `fixed_data`), one bagging, then one fit per loss. Cell
/// failures are recorded in place; only a config-level problem aborts.
pub fn run_table(cfg: &ExperimentConfig) -> Result<ResultTable, BagLearnError> {
    cfg.validate()?;
    let eps_grid: Vec<Option<f64>> = match &cfg.privacy {
        None => vec![None],
        Some(grid) => grid.epsilons.iter().copied().map(Some).collect(),
    };
    let mut records = Vec::new();
    for &method in &cfg.methods {
        for (eps_index, &eps) in eps_grid.iter().enumerate() {
            for run in 0..cfg.runs {
                let seed = derive_run_seed(cfg.master_seed, method.name(), eps_index, run);
                run_one(cfg, method, eps, run, seed, &mut records);
            }
        }
    }
    Ok(ResultTable {
        config: cfg.clone(),
        records,
    })
}

fn run_one(
    cfg: &ExperimentConfig,
    method: BaggingMethod,
    eps: Option<f64>,
    run: usize,
    seed: u64,
    records: &mut Vec<RunRecord>,
) {
    let record = |loss: LossKind, outcome: Result<RunOutcome, String>| RunRecord {
        method,
        epsilon: eps,
        run,
        seed,
        loss,
        outcome,
    };
    // the data stream is disjoint from the pipeline stream so that bagging
    // randomness never aliases feature randomness
    let data_seed = if cfg.fixed_data {
        derive_run_seed(cfg.master_seed, "fixed-data", 0, 0)
    } else {
        derive_run_seed(seed, "data", 0, 0)
    };
    let spec = DataSpec {
        seed: data_seed,
        ..cfg.data
    };
    let ds = match generate_dataset(&spec) {
        Ok((ds, _)) => ds,
        Err(e) => {
            let msg = e.to_string();
            records.extend(cfg.losses.iter().map(|&l| record(l, Err(msg.clone()))));
            return;
        }
    };
    let mut rng = rng_from_seed(derive_run_seed(seed, "pipeline", 0, 0));

    match eps {
        None => {
            let bagging = match build_bagging_with(method, &ds, cfg.k, cfg.min_size, &mut rng) {
                Ok(b) => b,
                Err(e) => {
                    let msg = e.to_string();
                    records.extend(cfg.losses.iter().map(|&l| record(l, Err(msg.clone()))));
                    return;
                }
            };
            for &loss in &cfg.losses {
                let outcome = plain_cell(cfg, &ds, &bagging, loss, &mut rng)
                    .map_err(|e| e.to_string());
                records.push(record(loss, outcome));
            }
        }
        Some(epsilon) => {
            let grid = cfg.privacy.as_ref().expect("validated");
            let p = PrivacyParams {
                epsilon,
                delta: grid.delta,
                clip_bound: grid.clip_bound,
            };
            let clipped = match clip_labels(ds.labels.view(), p.clip_bound) {
                Ok(labels) => Dataset {
                    labels,
                    ..ds.clone()
                },
                Err(e) => {
                    let msg = e.to_string();
                    records.extend(cfg.losses.iter().map(|&l| record(l, Err(msg.clone()))));
                    return;
                }
            };
            for &loss in &cfg.losses {
                let outcome = private_cell(cfg, &clipped, &ds, method, loss, &p, &mut rng)
                    .map_err(|e| e.to_string());
                records.push(record(loss, outcome));
            }
        }
    }
}

/// Builds one bagging with the named strategy. `min_size` only affects
/// label k-means, which switches to the variant with bag sizes in [k, 2k).
pub fn build_bagging_with<R: rand::Rng>(
    method: BaggingMethod,
    ds: &Dataset,
    k: usize,
    min_size: bool,
    rng: &mut R,
) -> Result<Bagging, BagLearnError> {
    match method {
        BaggingMethod::InstanceKmeans => instance_kmeans_balanced(ds.features.view(), k, rng),
        BaggingMethod::LabelKmeans => {
            if min_size {
                label_kmeans_minsize(ds.labels.view(), k)
            } else {
                label_kmeans_equal(ds.labels.view(), k)
            }
        }
        BaggingMethod::Random => random_bagging(ds.n(), k, rng),
    }
}

fn score(est: &ModelEstimate, ds: &Dataset) -> Result<f64, BagLearnError> {
    let theta_star = ds
        .theta_star
        .as_ref()
        .ok_or_else(|| BagLearnError::param("scoring needs the generating theta_star"))?;
    estimation_error(est, theta_star.view())
}

fn noiseless_labels(ds: &Dataset) -> Result<ArrayView1<'_, f64>, BagLearnError> {
    ds.expected_labels
        .as_ref()
        .map(|v| v.view())
        .ok_or_else(|| BagLearnError::param("bounds need the noiseless labels"))
}

fn plain_cell<R: rand::Rng>(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    bagging: &Bagging,
    loss: LossKind,
    rng: &mut R,
) -> Result<RunOutcome, BagLearnError> {
    let x = ds.features.view();
    let est = match loss {
        LossKind::Ols => fit_ols(x, ds.labels.view())?,
        LossKind::InstanceMir => {
            let agg = make_bag_labels(ds, bagging, AggregateKind::MirSample, rng)?;
            fit_instance_mir(x, bagging, &agg)?
        }
        LossKind::BagLlp => {
            let agg = make_bag_labels(ds, bagging, AggregateKind::LlpMean, rng)?;
            fit_bag_llp(x, bagging, &agg)?
        }
        LossKind::AggMir => {
            let agg = make_bag_labels(ds, bagging, AggregateKind::MirSample, rng)?;
            fit_agg_mir(x, bagging, &agg)?
        }
    };
    let error = score(&est, ds)?;
    let bound = if cfg.emit_bounds {
        match loss {
            LossKind::Ols => None,
            LossKind::InstanceMir => Some(bounds::instance_mir_bound(
                x,
                noiseless_labels(ds)?,
                ds.noise_sigma,
                bagging,
            )?),
            LossKind::BagLlp => Some(bounds::bag_llp_bound(x, ds.noise_sigma, bagging)?),
            LossKind::AggMir => Some(bounds::agg_mir_bound(
                x,
                noiseless_labels(ds)?,
                ds.noise_sigma,
                bagging,
            )?),
        }
    } else {
        None
    };
    Ok(RunOutcome { error, bound })
}

/// One private cell. The clipped dataset feeds the pipeline; scoring still
/// uses the generator's θ*. Bounds are omitted because the a priori bounds
/// do not model the injected label noise.
fn private_cell<R: rand::Rng>(
    cfg: &ExperimentConfig,
    clipped: &Dataset,
    ds: &Dataset,
    method: BaggingMethod,
    loss: LossKind,
    p: &PrivacyParams,
    rng: &mut R,
) -> Result<RunOutcome, BagLearnError> {
    let route = match method {
        BaggingMethod::LabelKmeans => MirRoute::LabelClustering,
        BaggingMethod::InstanceKmeans => MirRoute::LabelFree,
        BaggingMethod::Random => {
            return Err(BagLearnError::param(
                "random bagging has no private pipeline",
            ));
        }
    };
    if loss == LossKind::BagLlp && method == BaggingMethod::LabelKmeans {
        return Err(BagLearnError::param(
            "the private bag-mean pipeline bags by features, not labels",
        ));
    }
    let prun = private_pipeline_routed(clipped, cfg.k, loss, route, p, rng)?;
    let x = ds.features.view();
    let est = match loss {
        LossKind::InstanceMir => fit_instance_mir(x, &prun.bagging, &prun.labels)?,
        LossKind::BagLlp => fit_bag_llp(x, &prun.bagging, &prun.labels)?,
        LossKind::AggMir => fit_agg_mir(x, &prun.bagging, &prun.labels)?,
        LossKind::Ols => {
            unreachable!("the pipeline rejects the baseline before fitting")
        }
    };
    Ok(RunOutcome {
        error: score(&est, ds)?,
        bound: None,
    })
}
