//! Self-check suite behind `baglearn verify`.
//!
//! Re-derives the algebraic identities the estimators and bounds rely on,
//! then checks that every a priori bound dominates fresh simulated errors.
//! Each check prints one PASS/FAIL line; the suite passes only if all do.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use baglearn::bag::{
    bagging_matrix, build_bagging, kmeans_objective_1d, kmeans_objective_multi,
    sample_attribution, AggregateKind, AggregateLabels, Bagging,
};
use baglearn::bounds::{
    agg_mir_bound, bag_llp_bound, bag_llp_exact_error, instance_mir_bound,
    variance_decomposition_check,
};
use baglearn::estimators::{estimation_error, fit_agg_mir, fit_instance_mir};
use baglearn::linalg::sym_eigen;
use baglearn::rng::{derive_run_seed, rng_from_seed};
use baglearn::strategies::{label_kmeans_equal, random_bagging};
use baglearn::synth::{generate_dataset, DataFamily, DataSpec};

const IDENTITY_TRIALS: usize = 100;
const IDENTITY_TOL: f64 = 1e-9;
const DOMINATION_TRIALS: usize = 25;
const DOMINATION_DRAWS: usize = 200;

pub fn run(seed: u64) -> bool {
    let identities = [
        check_identity(seed, "sampled-label energy", sampled_energy_residual),
        check_identity(seed, "centroid energy", centroid_energy_residual),
        check_identity(seed, "broadcast factorization", broadcast_residual),
        check_identity(seed, "clustering complement", complement_residual),
        check_identity(seed, "per-direction clustering split", direction_residual),
        check_identity(seed, "variance decomposition", variance_residual),
    ];
    let dominations = check_dominations(seed);
    let mut pass = true;
    for line in identities.iter().chain(dominations.iter()) {
        println!("{line}");
        pass &= line.starts_with("PASS");
    }
    pass
}

/// One random dataset plus a bagging: equal random bags on even trials,
/// ragged ones (sizes in [k, 2k)) on odd trials, families cycled.
fn identity_instance(seed: u64, trial: usize) -> (Array1<f64>, Array2<f64>, Bagging) {
    let k = [2, 3, 5][trial % 3];
    let m = 4 + trial % 7;
    let n = k * m;
    let spec = DataSpec {
        n,
        d: 3,
        family: DataFamily::ALL[trial % 3],
        sigma: 0.5,
        seed: derive_run_seed(seed, "identity", 0, trial),
    };
    let (ds, _) = generate_dataset(&spec).expect("valid spec");
    let mut rng = rng_from_seed(derive_run_seed(seed, "identity-bagging", 0, trial));
    let bagging = if trial % 2 == 0 {
        random_bagging(n, k, &mut rng).expect("divisible")
    } else {
        ragged_bagging(n, k, &mut rng)
    };
    (ds.expected_labels.expect("synthetic"), ds.features, bagging)
}

fn ragged_bagging<R: Rng>(n: usize, k: usize, rng: &mut R) -> Bagging {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut assignment = vec![0usize; n];
    let mut start = 0;
    let mut bag = 0;
    while start < n {
        let remaining = n - start;
        // never strand a tail shorter than k
        let size = if remaining < 3 * k {
            remaining
        } else {
            rng.random_range(k..2 * k)
        };
        for &i in &perm[start..start + size] {
            assignment[i] = bag;
        }
        start += size;
        bag += 1;
    }
    build_bagging(&assignment, k).expect("sizes at least k")
}

fn check_identity(
    seed: u64,
    name: &str,
    residual: fn(ArrayView1<f64>, &Array2<f64>, &Bagging) -> f64,
) -> String {
    let mut worst = 0.0f64;
    for trial in 0..IDENTITY_TRIALS {
        let (ytilde, x, b) = identity_instance(seed, trial);
        worst = worst.max(residual(ytilde.view(), &x, &b));
    }
    if worst <= IDENTITY_TOL {
        format!("PASS {name}: worst relative residual {worst:.2e} over {IDENTITY_TRIALS} trials")
    } else {
        format!("FAIL {name}: worst relative residual {worst:.2e} exceeds {IDENTITY_TOL:e}")
    }
}

/// Expected energy of the sampled-label broadcast equals the label energy:
/// summing each bag's mean squared label times its size recovers ‖ỹ‖².
fn sampled_energy_residual(ytilde: ArrayView1<f64>, _x: &Array2<f64>, b: &Bagging) -> f64 {
    let squares = ytilde.mapv(|v| v * v);
    let per_bag = b.bag_means(squares.view());
    let expected: f64 = per_bag
        .iter()
        .zip(b.sizes())
        .map(|(&mean_sq, sz)| sz as f64 * mean_sq)
        .sum();
    let energy = ytilde.dot(&ytilde);
    (expected - energy).abs() / energy.max(1e-300)
}

/// Quadratic form of the broadcast projection equals the per-bag squared
/// sums divided by bag sizes.
fn centroid_energy_residual(ytilde: ArrayView1<f64>, _x: &Array2<f64>, b: &Bagging) -> f64 {
    let means = b.bag_means(ytilde);
    let lhs = b.broadcast(means.view()).dot(&ytilde);
    let rhs: f64 = b
        .bag_sums(ytilde)
        .iter()
        .zip(b.sizes())
        .map(|(&s, sz)| s * s / sz as f64)
        .sum();
    (lhs - rhs).abs() / rhs.abs().max(1e-300)
}

/// The broadcast projection factors through the normalized membership
/// matrix: S̄ = MᵀM entrywise.
fn broadcast_residual(_ytilde: ArrayView1<f64>, _x: &Array2<f64>, b: &Bagging) -> f64 {
    let matrix = bagging_matrix(b);
    let m = matrix.normalized_membership_dense();
    let product = m.t().dot(&m);
    let direct = matrix.broadcast_dense();
    (&product - &direct)
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Label energy minus the per-bag squared-sum term equals the 1-d
/// clustering objective of the bagging.
fn complement_residual(ytilde: ArrayView1<f64>, _x: &Array2<f64>, b: &Bagging) -> f64 {
    let sums_term: f64 = b
        .bag_sums(ytilde)
        .iter()
        .zip(b.sizes())
        .map(|(&s, sz)| s * s / sz as f64)
        .sum();
    let lhs = ytilde.dot(&ytilde) - sums_term;
    let rhs = kmeans_objective_1d(ytilde, b);
    (lhs - rhs).abs() / rhs.abs().max(1.0)
}

/// The multivariate clustering objective splits across any orthonormal
/// basis into 1-d objectives of the projections.
fn direction_residual(_ytilde: ArrayView1<f64>, x: &Array2<f64>, b: &Bagging) -> f64 {
    let d = x.ncols();
    // eigenvectors of a random symmetric matrix give a random orthonormal basis
    let mut rng = rng_from_seed(x.nrows() as u64 ^ 0x9e37);
    let g: Array2<f64> = Array2::from_shape_simple_fn((d, d), || rng.sample(StandardNormal));
    let sym = &g + &g.t();
    let (_, basis) = sym_eigen(sym.view());
    let total = kmeans_objective_multi(x.view(), b);
    let split: f64 = basis
        .columns()
        .into_iter()
        .map(|z| kmeans_objective_1d(x.dot(&z).view(), b))
        .sum();
    (total - split).abs() / total.abs().max(1.0)
}

/// Centroid scatter along a direction equals instance scatter minus the
/// clustering cost, scaled by the squared bag size (equal bags only).
fn variance_residual(_ytilde: ArrayView1<f64>, x: &Array2<f64>, b: &Bagging) -> f64 {
    let Some(k) = b.uniform_size() else {
        // ragged trials exercise the other identities
        return 0.0;
    };
    let mut centered = x.clone();
    for mut col in centered.columns_mut() {
        let mean = col.sum() / col.len() as f64;
        col.mapv_inplace(|v| v - mean);
    }
    let mut rng = rng_from_seed(b.n() as u64 ^ (k as u64) << 8);
    let direction: Array1<f64> =
        Array1::from_shape_simple_fn(x.ncols(), || rng.sample(StandardNormal));
    let scale = centered
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .powi(2)
        .max(1.0);
    variance_decomposition_check(centered.view(), b, direction.view()).expect("centered input")
        / scale
}

/// Every bound must sit above the error it claims to cap: Monte Carlo means
/// for the sampled-label losses, the closed-form expectation for the
/// bag-mean loss.
fn check_dominations(seed: u64) -> Vec<String> {
    let (mut instance_ok, mut llp_ok, mut agg_ok) = (0usize, 0usize, 0usize);
    for trial in 0..DOMINATION_TRIALS {
        let (n, d, k) = (200, 4, 5);
        let spec = DataSpec {
            n,
            d,
            family: DataFamily::Isotropic,
            sigma: 0.5,
            seed: derive_run_seed(seed, "domination", 0, trial),
        };
        let (ds, _) = generate_dataset(&spec).expect("valid spec");
        let ytilde = ds.expected_labels.as_ref().expect("synthetic");
        let theta_star = ds.theta_star.as_ref().expect("synthetic");
        let mut rng = rng_from_seed(derive_run_seed(seed, "domination-draws", 0, trial));
        let bagging = if trial % 2 == 0 {
            random_bagging(n, k, &mut rng).expect("divisible")
        } else {
            label_kmeans_equal(ytilde.view(), k).expect("divisible")
        };
        let x = ds.features.view();
        let sigma = ds.noise_sigma;

        let (mut instance_total, mut agg_total) = (0.0, 0.0);
        for _ in 0..DOMINATION_DRAWS {
            let noise: Array1<f64> =
                Array1::from_shape_simple_fn(n, || sigma * rng.sample::<f64, _>(StandardNormal));
            let y = ytilde + &noise;
            let draw = sample_attribution(&bagging, &mut rng);
            let values = Array1::from_iter(draw.chosen.iter().map(|&i| y[i]));
            let agg = AggregateLabels::new(values, AggregateKind::MirSample);
            let est = fit_instance_mir(x, &bagging, &agg).expect("full rank");
            instance_total += estimation_error(&est, theta_star.view()).expect("same dim");
            let est = fit_agg_mir(x, &bagging, &agg).expect("full rank");
            agg_total += estimation_error(&est, theta_star.view()).expect("same dim");
        }
        let draws = DOMINATION_DRAWS as f64;

        let bound = instance_mir_bound(x, ytilde.view(), sigma, &bagging).expect("full rank");
        instance_ok += (instance_total / draws <= bound) as usize;
        let bound = bag_llp_bound(x, sigma, &bagging).expect("full rank");
        llp_ok += (bag_llp_exact_error(x, sigma, &bagging).expect("full rank") <= bound) as usize;
        let bound = agg_mir_bound(x, ytilde.view(), sigma, &bagging).expect("full rank");
        agg_ok += (agg_total / draws <= bound) as usize;
    }
    [
        ("instance sampled-label bound", instance_ok),
        ("bag-mean bound", llp_ok),
        ("aggregate sampled-label bound", agg_ok),
    ]
    .into_iter()
    .map(|(name, ok)| {
        let status = if ok == DOMINATION_TRIALS { "PASS" } else { "FAIL" };
        format!("{status} {name}: dominated {ok}/{DOMINATION_TRIALS} simulated instances")
    })
    .collect()
}
