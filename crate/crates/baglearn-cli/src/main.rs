//! Command line driver: dataset generation, bag construction, fitting,
//! bound evaluation, experiment grids, and a self-check suite.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use baglearn::bag::{
    read_bagging, sample_attribution, write_bagging, AggregateKind, AggregateLabels, Bagging,
};
use baglearn::bounds::{
    agg_mir_bound, bag_llp_bound, bag_llp_exact_error, instance_mir_bound, BoundReport,
};
use baglearn::error::BagLearnError;
use baglearn::estimators::{
    estimation_error, fit_agg_mir, fit_bag_llp, fit_instance_mir, fit_ols, make_bag_labels,
    LossKind,
};
use baglearn::harness::{
    build_bagging_with, run_table, BaggingMethod, ExperimentConfig, PrivacyGrid,
};
use baglearn::rng::rng_from_seed;
use baglearn::synth::{generate_dataset, DataFamily, DataSpec};
use baglearn::Dataset;

mod verify;

#[derive(Parser)]
#[command(
    name = "baglearn",
    version,
    about = "Bag construction, aggregate-label fitting, and error-bound checking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic regression dataset and write it as columnar text
    Generate(GenerateArgs),
    /// Partition a dataset into bags and write the assignment
    Bag(BagArgs),
    /// Fit a model from aggregate bag labels and report its parameter error
    Fit(FitArgs),
    /// Evaluate each loss's error bound against simulated fits
    Bound(BoundArgs),
    /// Run an experiment grid from a config file and emit a results CSV
    Experiment(ExperimentArgs),
    /// Re-derive the core identities and bound guarantees on random data
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of instances
    #[arg(long)]
    n: usize,
    /// Number of features
    #[arg(long)]
    d: usize,
    /// Feature family: isotropic, noniso-independent, or noniso-correlated
    #[arg(long, default_value = "isotropic", value_parser = DataFamily::from_str)]
    family: DataFamily,
    /// Label noise standard deviation
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BagArgs {
    /// Dataset file produced by `generate`
    #[arg(long)]
    data: PathBuf,
    /// Strategy: instance-kmeans, label-kmeans, or random
    #[arg(long, value_parser = BaggingMethod::from_str)]
    method: BaggingMethod,
    /// Bag size
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Let label k-means pick bag sizes in [k, 2k) instead of exactly k
    #[arg(long)]
    min_size: bool,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset file produced by `generate`
    #[arg(long)]
    data: PathBuf,
    /// Bagging file produced by `bag`; not needed for the ols baseline
    #[arg(long)]
    bags: Option<PathBuf>,
    /// Loss: instance-mir, bag-llp, agg-mir, or ols
    #[arg(long, value_parser = LossKind::from_str)]
    loss: LossKind,
    /// Seed for the sampled-member draw of the MIR losses
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BoundArgs {
    /// Dataset file produced by `generate`
    #[arg(long)]
    data: PathBuf,
    /// Bagging file produced by `bag`
    #[arg(long)]
    bags: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulated fits per sampled-label loss behind the empirical column
    #[arg(long, default_value_t = 200)]
    draws: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Config file of `key = value` lines
    config: PathBuf,
    /// CSV output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replication count
    #[arg(long)]
    runs: Option<usize>,
    /// Reuse one dataset for every cell instead of resampling per run
    #[arg(long)]
    fixed_data: bool,
    /// Let label k-means pick bag sizes in [k, 2k)
    #[arg(long)]
    min_size: bool,
    /// Comma-separated ε grid enabling the private pipelines
    #[arg(long)]
    epsilon_grid: Option<String>,
    /// Label clipping radius for the private pipelines
    #[arg(long)]
    clip_bound: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Bag(a) => cmd_bag(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Verify(a) => {
            return if verify::run(a.seed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, BagLearnError> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout())),
    })
}

fn load_bagging(path: &Path) -> Result<Bagging, BagLearnError> {
    let file = BufReader::new(File::open(path)?);
    read_bagging(file, 1)
}

fn cmd_generate(a: GenerateArgs) -> Result<(), BagLearnError> {
    let spec = DataSpec {
        n: a.n,
        d: a.d,
        family: a.family,
        sigma: a.sigma,
        seed: a.seed,
    };
    let (ds, _) = generate_dataset(&spec)?;
    let mut out = open_out(a.out.as_deref())?;
    ds.write(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_bag(a: BagArgs) -> Result<(), BagLearnError> {
    let ds = Dataset::load(&a.data)?;
    let mut rng = rng_from_seed(a.seed);
    let b = build_bagging_with(a.method, &ds, a.k, a.min_size, &mut rng)?;
    let mut out = open_out(a.out.as_deref())?;
    write_bagging(&b, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<(), BagLearnError> {
    let ds = Dataset::load(&a.data)?;
    let est = match a.loss {
        LossKind::Ols => fit_ols(ds.features.view(), ds.labels.view())?,
        loss => {
            let bags = a
                .bags
                .as_ref()
                .ok_or_else(|| BagLearnError::param(format!("{loss} needs --bags")))?;
            let b = load_bagging(bags)?;
            let kind = match loss {
                LossKind::BagLlp => AggregateKind::LlpMean,
                _ => AggregateKind::MirSample,
            };
            let mut rng = rng_from_seed(a.seed);
            let agg = make_bag_labels(&ds, &b, kind, &mut rng)?;
            match loss {
                LossKind::InstanceMir => fit_instance_mir(ds.features.view(), &b, &agg)?,
                LossKind::BagLlp => fit_bag_llp(ds.features.view(), &b, &agg)?,
                LossKind::AggMir => fit_agg_mir(ds.features.view(), &b, &agg)?,
                LossKind::Ols => unreachable!("handled above"),
            }
        }
    };
    println!("loss: {}", est.loss_kind);
    let joined: Vec<String> = est.theta_hat.iter().map(|v| format!("{v}")).collect();
    println!("theta_hat: {}", joined.join(" "));
    if let Some(theta_star) = &ds.theta_star {
        println!("error: {}", estimation_error(&est, theta_star.view())?);
    }
    Ok(())
}

/// Prints the three aggregate-loss bounds next to empirical errors: a
/// closed-form expectation for the bag-mean loss and seeded Monte Carlo
/// means (fresh noise and member draw per replicate) for the two
/// sampled-label losses.
fn cmd_bound(a: BoundArgs) -> Result<(), BagLearnError> {
    let ds = Dataset::load(&a.data)?;
    let b = load_bagging(&a.bags)?;
    let (Some(ytilde), Some(theta_star)) = (&ds.expected_labels, &ds.theta_star) else {
        return Err(BagLearnError::param(
            "bound evaluation needs a dataset with noiseless labels and the \
             generating parameters (use a file written by `generate`)",
        ));
    };
    if a.draws == 0 {
        return Err(BagLearnError::param("draws must be at least 1"));
    }
    let x = ds.features.view();
    let sigma = ds.noise_sigma;

    let mut rng = rng_from_seed(a.seed);
    let n = ds.n();
    let (mut instance_total, mut agg_total) = (0.0, 0.0);
    for _ in 0..a.draws {
        let noise: Array1<f64> =
            Array1::from_shape_simple_fn(n, || sigma * rng.sample::<f64, _>(StandardNormal));
        let y = ytilde + &noise;
        let draw = sample_attribution(&b, &mut rng);
        let values = Array1::from_iter(draw.chosen.iter().map(|&i| y[i]));
        let agg = AggregateLabels::new(values, AggregateKind::MirSample);
        let est = fit_instance_mir(x, &b, &agg)?;
        instance_total += estimation_error(&est, theta_star.view())?;
        let est = fit_agg_mir(x, &b, &agg)?;
        agg_total += estimation_error(&est, theta_star.view())?;
    }
    let draws = a.draws as f64;

    let reports = [
        BoundReport {
            name: LossKind::InstanceMir.to_string(),
            value: instance_mir_bound(x, ytilde.view(), sigma, &b)?,
            empirical_error: instance_total / draws,
        },
        BoundReport {
            name: LossKind::BagLlp.to_string(),
            value: bag_llp_bound(x, sigma, &b)?,
            empirical_error: bag_llp_exact_error(x, sigma, &b)?,
        },
        BoundReport {
            name: LossKind::AggMir.to_string(),
            value: agg_mir_bound(x, ytilde.view(), sigma, &b)?,
            empirical_error: agg_total / draws,
        },
    ];
    println!("{}", BoundReport::csv_header());
    for report in &reports {
        println!("{}", report.csv_row());
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<(), BagLearnError> {
    let text = std::fs::read_to_string(&a.config)?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
        cfg.data.seed = seed;
    }
    if let Some(runs) = a.runs {
        cfg.runs = runs;
    }
    if a.fixed_data {
        cfg.fixed_data = true;
    }
    if a.min_size {
        cfg.min_size = true;
    }
    if let Some(grid) = &a.epsilon_grid {
        let epsilons: Vec<f64> = grid
            .split(',')
            .map(|v| v.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| {
                BagLearnError::param(format!(
                    "--epsilon-grid {grid:?} is not a comma-separated list of numbers"
                ))
            })?;
        let delta = cfg.privacy.as_ref().map_or(1e-5, |g| g.delta);
        let clip_bound = a
            .clip_bound
            .or(cfg.privacy.as_ref().map(|g| g.clip_bound))
            .ok_or_else(|| {
                BagLearnError::param(
                    "--epsilon-grid needs --clip-bound (or a clip_bound in the config)",
                )
            })?;
        cfg.privacy = Some(PrivacyGrid {
            epsilons,
            delta,
            clip_bound,
        });
    } else if let Some(clip_bound) = a.clip_bound {
        match &mut cfg.privacy {
            Some(grid) => grid.clip_bound = clip_bound,
            None => {
                return Err(BagLearnError::param(
                    "--clip-bound only applies together with an epsilon grid",
                ));
            }
        }
    }
    cfg.validate()?;

    let table = run_table(&cfg)?;
    let csv = table.to_csv();
    match &a.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            println!(
                "{:<18} {:>8} {:<13} {:>12} {:>12} {:>5} {:>6}",
                "method", "epsilon", "loss", "mean", "std", "runs", "failed"
            );
            for cell in table.summaries() {
                let eps = cell
                    .epsilon
                    .map_or_else(|| "none".to_string(), |e| format!("{e}"));
                println!(
                    "{:<18} {:>8} {:<13} {:>12.6} {:>12.6} {:>5} {:>6}",
                    cell.method.name(),
                    eps,
                    cell.loss.name(),
                    cell.mean,
                    cell.std,
                    cell.runs,
                    cell.failed
                );
            }
        }
        None => print!("{csv}"),
    }
    Ok(())
}
