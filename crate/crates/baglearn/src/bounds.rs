//! Closed-form error ceilings and spectral diagnostics for aggregate-label
//! regression.
//!
//! Every fitting routine in [`crate::estimators`] has an evaluator here that
//! computes a provable upper bound on its expected squared parameter error
//! for a concrete dataset and bagging, plus the exact expectation where one
//! exists in closed form. The evaluators are formulas, not simulations, so
//! tests can draw Monte Carlo errors and check domination directly.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::bag::{kmeans_objective_1d, Bagging};
use crate::error::BagLearnError;
use crate::linalg::{frobenius_norm_sq, min_max_eigenvalues, op_norm, solve_spd_multi, TallQr};

/// Eigenvalue extremes of the bag-centroid Gram matrix `CᵀC`, where row `l`
/// of `C` is the mean feature vector of bag `l`, together with the operator
/// norm of the pseudo-inverse `(CᵀC)⁻¹Cᵀ` that maps bag labels to fitted
/// coefficients.
#[derive(Debug, Clone, Copy)]
pub struct SpectralSummary {
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// `lambda_max / lambda_min`; at least 1.
    pub condition_number: f64,
    /// `‖(CᵀC)⁻¹Cᵀ‖_op`, the largest singular value of the pseudo-inverse.
    pub op_norm_pinv: f64,
}

/// Centroid matrix and its Gram, rejected when the spectrum is too close to
/// singular for the downstream solves to mean anything.
fn checked_centroid_gram(
    x: ArrayView2<f64>,
    b: &Bagging,
) -> Result<(Array2<f64>, Array2<f64>, f64, f64), BagLearnError> {
    if x.nrows() != b.n() {
        return Err(BagLearnError::dim(format!(
            "feature matrix has {} rows, bagging covers {} instances",
            x.nrows(),
            b.n()
        )));
    }
    let c = b.bag_row_means(x);
    let gram = c.t().dot(&c);
    let (lambda_min, lambda_max) = min_max_eigenvalues(gram.view());
    if lambda_max <= 0.0 || lambda_min <= 1e-12 * lambda_max {
        return Err(BagLearnError::DegenerateSpectrum {
            min_eig: lambda_min,
            max_eig: lambda_max,
        });
    }
    Ok((c, gram, lambda_min, lambda_max))
}

/// Spectral summary of the bag-centroid Gram matrix.
///
/// With unit bags the centroids are the instances themselves and this is the
/// spectrum of `XᵀX`; merging instances into larger bags can only shrink
/// eigenvalues.
pub fn centroid_spectrum(
    x: ArrayView2<f64>,
    b: &Bagging,
) -> Result<SpectralSummary, BagLearnError> {
    let (c, gram, lambda_min, lambda_max) = checked_centroid_gram(x, b)?;
    let pinv = solve_spd_multi(gram.view(), c.t())?;
    Ok(SpectralSummary {
        lambda_max,
        lambda_min,
        condition_number: lambda_max / lambda_min,
        op_norm_pinv: op_norm(pinv.view()),
    })
}

/// Ceiling on the expected squared parameter error of the instance-level fit
/// where every member inherits its bag's sampled label.
///
/// The two addends track the two error sources: label transplantation inside
/// bags, worth twice the one-dimensional clustering cost of the noiseless
/// labels, and observation noise, worth `σ²·d`. Both are scaled by the
/// squared operator norm of the least-squares pseudo-inverse `(XᵀX)⁻¹Xᵀ`.
pub fn instance_mir_bound(
    x: ArrayView2<f64>,
    ytilde: ArrayView1<f64>,
    sigma: f64,
    b: &Bagging,
) -> Result<f64, BagLearnError> {
    if x.nrows() != b.n() || ytilde.len() != b.n() {
        return Err(BagLearnError::dim(format!(
            "features ({} rows), labels ({}), and bagging ({}) disagree",
            x.nrows(),
            ytilde.len(),
            b.n()
        )));
    }
    if sigma < 0.0 {
        return Err(BagLearnError::param("sigma must be nonnegative"));
    }
    let qr = TallQr::new(x);
    if qr.rank() < x.ncols() {
        return Err(BagLearnError::RankDeficient {
            rank: qr.rank(),
            cols: x.ncols(),
        });
    }
    let gram = x.t().dot(&x);
    let pinv = solve_spd_multi(gram.view(), x.t())?;
    let op2 = op_norm(pinv.view()).powi(2);
    let km = kmeans_objective_1d(ytilde, b);
    Ok(op2 * (2.0 * km + sigma * sigma * x.ncols() as f64))
}

/// Ceiling on the expected squared parameter error of the bag-mean fit:
/// `σ² · cond(CᵀC)² · Σ_l 1/|B_l|`. For equal bags of size k the last factor
/// is `m/k`.
pub fn bag_llp_bound(x: ArrayView2<f64>, sigma: f64, b: &Bagging) -> Result<f64, BagLearnError> {
    if sigma < 0.0 {
        return Err(BagLearnError::param("sigma must be nonnegative"));
    }
    let s = centroid_spectrum(x, b)?;
    let inv_sizes: f64 = b.sizes().iter().map(|&sz| 1.0 / sz as f64).sum();
    Ok(sigma * sigma * s.condition_number.powi(2) * inv_sizes)
}

/// Exact expected squared parameter error of the bag-mean fit, not a bound.
///
/// The fit is linear in the label noise, and averaging a bag divides the
/// noise variance by its size, so the expectation collapses to
/// `σ² ‖(CᵀC)⁻¹Cᵀ D‖²_F` with `D = diag(1/√|B_l|)`.
pub fn bag_llp_exact_error(
    x: ArrayView2<f64>,
    sigma: f64,
    b: &Bagging,
) -> Result<f64, BagLearnError> {
    if sigma < 0.0 {
        return Err(BagLearnError::param("sigma must be nonnegative"));
    }
    let (c, gram, _, _) = checked_centroid_gram(x, b)?;
    let mut pinv = solve_spd_multi(gram.view(), c.t())?;
    for (l, &sz) in b.sizes().iter().enumerate() {
        let scale = 1.0 / (sz as f64).sqrt();
        pinv.column_mut(l).mapv_inplace(|v| v * scale);
    }
    Ok(sigma * sigma * frobenius_norm_sq(pinv.view()))
}

/// Ceiling on the expected squared parameter error of the centroid fit with
/// one sampled label per bag:
/// `‖(CᵀC)⁻¹Cᵀ‖²_op · (Σ_l within-bag variance of ỹ · |B_l| / |B_l| + σ²n)`,
/// i.e. the pseudo-inverse gain times the label spread inside bags plus the
/// total noise energy. For equal bags the spread term equals the 1-d
/// clustering cost divided by k.
pub fn agg_mir_bound(
    x: ArrayView2<f64>,
    ytilde: ArrayView1<f64>,
    sigma: f64,
    b: &Bagging,
) -> Result<f64, BagLearnError> {
    if ytilde.len() != b.n() {
        return Err(BagLearnError::dim(format!(
            "labels ({}) and bagging ({}) disagree",
            ytilde.len(),
            b.n()
        )));
    }
    if sigma < 0.0 {
        return Err(BagLearnError::param("sigma must be nonnegative"));
    }
    let s = centroid_spectrum(x, b)?;
    let mut spread = 0.0;
    for bag in b.members() {
        let size = bag.len() as f64;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for &i in bag {
            let v = ytilde[i];
            sum += v;
            sq += v * v;
        }
        // Mean of squares minus squared mean; clamp the float dust that a
        // constant bag can leave behind so the bound stays nonnegative.
        spread += (sq / size - (sum / size).powi(2)).max(0.0);
    }
    let n = b.n() as f64;
    Ok(s.op_norm_pinv.powi(2) * (spread + sigma * sigma * n))
}

/// High-probability floor for the smallest eigenvalue of the centroid Gram
/// produced by sampling one k-subset from each 2k-sized super-bag, with the
/// matching tail mass and the error ceiling the floor implies for the
/// bag-mean fit.
#[derive(Debug, Clone, Copy)]
pub struct ChernoffFloor {
    /// `(1−δ)·λ_min(XᵀX)/4k²`, held with probability at least
    /// `1 − failure_prob`.
    pub floor: f64,
    /// Matrix Chernoff tail mass `d·[e^{−δ}/(1−δ)^{1−δ}]^{μ/(kβ)}` with
    /// `μ = λ_min(XᵀX)/4k²` and `β = max_i ‖x_i‖²`. Not clamped: values
    /// above 1 mean the guarantee is vacuous at this sample size.
    pub failure_prob: f64,
    /// `16σ²nk²·cond(XᵀX)²/(1−δ)²`, the error level guaranteed whenever the
    /// floor holds.
    pub error_cap: f64,
}

/// Evaluates the random-half-sampling eigenvalue guarantee on a concrete
/// feature matrix.
pub fn chernoff_eig_floor(
    x: ArrayView2<f64>,
    k: usize,
    delta: f64,
    sigma: f64,
) -> Result<ChernoffFloor, BagLearnError> {
    if k == 0 {
        return Err(BagLearnError::param("k must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BagLearnError::param("delta must lie strictly in (0, 1)"));
    }
    if sigma < 0.0 {
        return Err(BagLearnError::param("sigma must be nonnegative"));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(BagLearnError::param("feature matrix must be nonempty"));
    }
    let gram = x.t().dot(&x);
    let (lambda_min, lambda_max) = min_max_eigenvalues(gram.view());
    if lambda_max <= 0.0 || lambda_min <= 1e-12 * lambda_max {
        return Err(BagLearnError::DegenerateSpectrum {
            min_eig: lambda_min,
            max_eig: lambda_max,
        });
    }
    let beta = x
        .rows()
        .into_iter()
        .map(|r| r.dot(&r))
        .fold(0.0f64, f64::max);
    let kf = k as f64;
    let mu_min = lambda_min / (4.0 * kf * kf);
    let base = (-delta).exp() / (1.0 - delta).powf(1.0 - delta);
    let cond = lambda_max / lambda_min;
    let n = x.nrows() as f64;
    Ok(ChernoffFloor {
        floor: (1.0 - delta) * mu_min,
        failure_prob: x.ncols() as f64 * base.powf(mu_min / (kf * beta)),
        error_cap: 16.0 * sigma * sigma * n * kf * kf * cond * cond
            / ((1.0 - delta) * (1.0 - delta)),
    })
}

/// Extra within-cluster cost incurred by merging two equal halves of a
/// 2k-element set into a single cluster, computed two independent ways.
///
/// Returns `(closed_form, loss_difference)`: the first is
/// `(s₁ − s₂)²/2k` from the half sums, the second subtracts the two halves'
/// clustering losses from the merged set's loss. The two agree to roundoff
/// and are nonnegative, which is what makes splitting super-bags never worse
/// than keeping them whole.
pub fn superbag_delta(
    values: ArrayView1<f64>,
    superbag: &[usize],
    split: (&[usize], &[usize]),
) -> Result<(f64, f64), BagLearnError> {
    let (h1, h2) = split;
    let k = h1.len();
    if k == 0 || h2.len() != k || superbag.len() != 2 * k {
        return Err(BagLearnError::param(
            "split halves must be equal-sized and cover the super-bag",
        ));
    }
    let mut all = superbag.to_vec();
    all.sort_unstable();
    let mut joined: Vec<usize> = h1.iter().chain(h2.iter()).copied().collect();
    joined.sort_unstable();
    if joined != all || all.windows(2).any(|w| w[0] == w[1]) {
        return Err(BagLearnError::param(
            "split must use each super-bag index exactly once",
        ));
    }
    if *all.last().unwrap() >= values.len() {
        return Err(BagLearnError::dim(format!(
            "super-bag index {} out of range for {} values",
            all.last().unwrap(),
            values.len()
        )));
    }
    let sum = |idxs: &[usize]| idxs.iter().map(|&i| values[i]).sum::<f64>();
    let loss = |idxs: &[usize]| {
        let mu = sum(idxs) / idxs.len() as f64;
        idxs.iter().map(|&i| (values[i] - mu).powi(2)).sum::<f64>()
    };
    let closed = (sum(h1) - sum(h2)).powi(2) / (2.0 * k as f64);
    let direct = loss(superbag) - loss(h1) - loss(h2);
    Ok((closed, direct))
}

/// Residual of the identity tying centroid spread to instance spread.
///
/// Let `v` be the projections of the rows onto `direction` and `c` the
/// per-bag means of `v`. For centered columns and equal bags of size k the
/// per-member centroid scatter satisfies
/// `(1/k)·Σ_l c_l² = (Σ_i v_i² − within-bag cost)/k²` exactly; the returned
/// value is the absolute difference of the two sides, which should be pure
/// roundoff. Maximizing centroid spread in a direction is therefore the same
/// as minimizing the clustering cost of the projections.
pub fn variance_decomposition_check(
    x: ArrayView2<f64>,
    b: &Bagging,
    direction: ArrayView1<f64>,
) -> Result<f64, BagLearnError> {
    if x.nrows() != b.n() || direction.len() != x.ncols() {
        return Err(BagLearnError::dim(format!(
            "features {}x{}, bagging over {}, direction of length {}",
            x.nrows(),
            x.ncols(),
            b.n(),
            direction.len()
        )));
    }
    let Some(k) = b.uniform_size() else {
        return Err(BagLearnError::param("bags must share a single size"));
    };
    for col in x.columns() {
        let scale = col.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let mean = col.sum() / col.len() as f64;
        if mean.abs() > 1e-9 * scale.max(1.0) {
            return Err(BagLearnError::param(
                "feature columns must be centered before the variance check",
            ));
        }
    }
    let v = x.dot(&direction);
    let c = b.bag_means(v.view());
    let kf = k as f64;
    let lhs = c.dot(&c) / kf;
    let km = kmeans_objective_1d(v.view(), b);
    let rhs = (v.dot(&v) - km) / (kf * kf);
    Ok((lhs - rhs).abs())
}

/// One bound next to the empirical error it is supposed to dominate, ready
/// for CSV reporting.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub empirical_error: f64,
}

impl BoundReport {
    pub fn csv_header() -> &'static str {
        "bound,value,empirical_error,ratio"
    }

    /// Bound divided by empirical error; infinite when the error is zero.
    pub fn ratio(&self) -> f64 {
        if self.empirical_error == 0.0 {
            f64::INFINITY
        } else {
            self.value / self.empirical_error
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.name,
            self.value,
            self.empirical_error,
            self.ratio()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bag::{build_bagging, sample_attribution, AggregateKind, AggregateLabels};
    use crate::estimators::{estimation_error, fit_agg_mir, fit_instance_mir};
    use crate::rng::rng_from_seed;
    use crate::strategies::{
        label_kmeans_equal, random_bagging, superbag_random, superbag_sorted_agg_mir,
    };
    use crate::synth::{attach_labels, gen_features, DataFamily, DataSpec};
    use ndarray::{array, Array1, Array2};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
    }

    fn unit_bags(n: usize) -> Bagging {
        let assignment: Vec<usize> = (0..n).collect();
        build_bagging(&assignment, 1).unwrap()
    }

    /// Random partition with bag sizes drawn from [min_size, 2·min_size].
    fn random_sizes_bagging<R: Rng>(n: usize, min_size: usize, rng: &mut R) -> Bagging {
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(rng);
        let mut assignment = vec![0usize; n];
        let mut start = 0;
        let mut bag = 0;
        while start < n {
            let remaining = n - start;
            let size = if remaining < 2 * min_size + min_size {
                remaining
            } else {
                rng.random_range(min_size..=2 * min_size)
            };
            for &i in &perm[start..start + size] {
                assignment[i] = bag;
            }
            start += size;
            bag += 1;
        }
        build_bagging(&assignment, min_size).unwrap()
    }

    fn centered(mut x: Array2<f64>) -> Array2<f64> {
        for mut col in x.columns_mut() {
            let mean = col.sum() / col.len() as f64;
            col.mapv_inplace(|v| v - mean);
        }
        x
    }

    #[test]
    fn unit_bag_spectrum_matches_feature_gram() {
        let x = normals(30, 3, 11);
        let b = unit_bags(30);
        let s = centroid_spectrum(x.view(), &b).unwrap();
        let gram = x.t().dot(&x);
        let (lo, hi) = min_max_eigenvalues(gram.view());
        assert!((s.lambda_min - lo).abs() <= 1e-9 * hi);
        assert!((s.lambda_max - hi).abs() <= 1e-9 * hi);
        assert!((s.condition_number - hi / lo).abs() <= 1e-9 * (hi / lo));
        let expected_pinv = 1.0 / lo.sqrt();
        assert!((s.op_norm_pinv - expected_pinv).abs() <= 1e-6 * expected_pinv);
    }

    #[test]
    fn orthogonal_equal_norm_columns_have_condition_one() {
        let x = array![[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]];
        let s = centroid_spectrum(x.view(), &unit_bags(4)).unwrap();
        assert!(s.condition_number >= 1.0);
        assert!((s.condition_number - 1.0).abs() <= 1e-9);

        // Unequal column norms break the scalar-identity Gram, so the
        // condition number must move away from 1.
        let skewed = array![[2.0, 1.0], [2.0, -1.0], [2.0, 1.0], [2.0, -1.0]];
        let s2 = centroid_spectrum(skewed.view(), &unit_bags(4)).unwrap();
        assert!(s2.condition_number > 1.0 + 1e-9);
    }

    #[test]
    fn bagging_never_raises_the_top_eigenvalue() {
        let mut rng = rng_from_seed(23);
        for trial in 0..20 {
            let n = 40;
            let x = normals(n, 3, 100 + trial);
            let k = [2, 4, 5][trial as usize % 3];
            let b = random_bagging(n, k, &mut rng).unwrap();
            let s = centroid_spectrum(x.view(), &b).unwrap();
            let (_, hi) = min_max_eigenvalues(x.t().dot(&x).view());
            assert!(
                s.lambda_max <= hi * (1.0 + 1e-9),
                "trial {trial}: centroid top eigenvalue {} exceeds instance {}",
                s.lambda_max,
                hi
            );
        }
    }

    #[test]
    fn collinear_centroids_report_degenerate_spectrum() {
        // Every row is (t, t), so all bag centroids live on one line and the
        // centroid Gram is rank one.
        let x = Array2::from_shape_fn((12, 2), |(i, _)| i as f64 - 5.0);
        let b = build_bagging(&[0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5], 2).unwrap();
        match centroid_spectrum(x.view(), &b) {
            Err(BagLearnError::DegenerateSpectrum { .. }) => {}
            other => panic!("expected degenerate spectrum, got {other:?}"),
        }
    }

    #[test]
    fn instance_mir_bound_is_zero_for_unit_bags_without_noise() {
        let x = normals(25, 3, 7);
        let y = normals(25, 1, 8).column(0).to_owned();
        let bound = instance_mir_bound(x.view(), y.view(), 0.0, &unit_bags(25)).unwrap();
        assert_eq!(bound, 0.0);
    }

    #[test]
    fn instance_mir_bound_dominates_simulated_error() {
        let (n, d, k) = (200, 4, 5);
        let mut rng = rng_from_seed(42);
        let spec = DataSpec {
            n,
            d,
            family: DataFamily::Isotropic,
            sigma: 0.5,
            seed: 0,
        };
        let (x, _) = gen_features(&spec, &mut rng).unwrap();
        let ds = attach_labels(x, 0.5, &mut rng);
        let ytilde = ds.expected_labels.as_ref().unwrap();
        let theta_star = ds.theta_star.as_ref().unwrap();
        let b = random_bagging(n, k, &mut rng).unwrap();
        let bound =
            instance_mir_bound(ds.features.view(), ytilde.view(), ds.noise_sigma, &b).unwrap();
        // Five independent batches of 100 draws; the bound is on the mean
        // error, so every batch mean must sit below it.
        for batch in 0..5 {
            let mut total = 0.0;
            for _ in 0..100 {
                let noise: Array1<f64> =
                    Array1::from_shape_simple_fn(n, || 0.5 * rng.sample::<f64, _>(StandardNormal));
                let y = ytilde + &noise;
                let draw = sample_attribution(&b, &mut rng);
                let values = Array1::from_iter(draw.chosen.iter().map(|&i| y[i]));
                let labels = AggregateLabels::new(values, AggregateKind::MirSample);
                let est = fit_instance_mir(ds.features.view(), &b, &labels).unwrap();
                total += estimation_error(&est, theta_star.view()).unwrap();
            }
            let mean = total / 100.0;
            assert!(
                mean <= bound,
                "batch {batch}: mean error {mean} exceeds bound {bound}"
            );
        }
    }

    #[test]
    fn label_clustered_bags_never_worsen_instance_bound() {
        let mut rng = rng_from_seed(5);
        let spec = DataSpec {
            n: 100,
            d: 3,
            family: DataFamily::Isotropic,
            sigma: 0.5,
            seed: 0,
        };
        let (x, _) = gen_features(&spec, &mut rng).unwrap();
        let ds = attach_labels(x, 0.5, &mut rng);
        let ytilde = ds.expected_labels.as_ref().unwrap();
        let clustered = label_kmeans_equal(ytilde.view(), 5).unwrap();
        let random = random_bagging(100, 5, &mut rng).unwrap();
        let bound_clustered =
            instance_mir_bound(ds.features.view(), ytilde.view(), 0.5, &clustered).unwrap();
        let bound_random =
            instance_mir_bound(ds.features.view(), ytilde.view(), 0.5, &random).unwrap();
        assert!(bound_clustered <= bound_random);
    }

    #[test]
    fn llp_bound_is_zero_without_noise() {
        let x = normals(40, 3, 17);
        let mut rng = rng_from_seed(18);
        let b = random_bagging(40, 4, &mut rng).unwrap();
        assert_eq!(bag_llp_bound(x.view(), 0.0, &b).unwrap(), 0.0);
    }

    #[test]
    fn equal_bag_llp_bound_matches_ratio_form() {
        let x = normals(60, 3, 19);
        let mut rng = rng_from_seed(20);
        let b = random_bagging(60, 5, &mut rng).unwrap();
        let bound = bag_llp_bound(x.view(), 0.7, &b).unwrap();
        let s = centroid_spectrum(x.view(), &b).unwrap();
        let m_over_k = b.m() as f64 / 5.0;
        let direct = 0.7 * 0.7 * s.condition_number.powi(2) * m_over_k;
        assert!((bound - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn llp_exact_error_never_exceeds_bound() {
        let mut rng = rng_from_seed(31);
        for trial in 0..100 {
            let d = 2 + trial % 2;
            let min_size = 2 + trial % 4;
            let n = 60;
            let x = normals(n, d, 500 + trial as u64);
            let b = if trial % 2 == 0 {
                random_sizes_bagging(n, min_size, &mut rng)
            } else {
                random_bagging(n, min_size, &mut rng).unwrap()
            };
            let exact = bag_llp_exact_error(x.view(), 0.5, &b).unwrap();
            let bound = bag_llp_bound(x.view(), 0.5, &b).unwrap();
            assert!(
                exact <= bound * (1.0 + 1e-9),
                "trial {trial}: exact {exact} above bound {bound}"
            );
        }
    }

    #[test]
    fn llp_exact_error_matches_simulation() {
        let (n, d, k) = (80, 3, 4);
        let mut rng = rng_from_seed(61);
        let spec = DataSpec {
            n,
            d,
            family: DataFamily::Isotropic,
            sigma: 0.5,
            seed: 0,
        };
        let (x, _) = gen_features(&spec, &mut rng).unwrap();
        let ds = attach_labels(x, 0.5, &mut rng);
        let ytilde = ds.expected_labels.as_ref().unwrap();
        let theta_star = ds.theta_star.as_ref().unwrap();
        let b = random_bagging(n, k, &mut rng).unwrap();
        let exact = bag_llp_exact_error(ds.features.view(), 0.5, &b).unwrap();
        let draws = 3000;
        let mut total = 0.0;
        for _ in 0..draws {
            let noise: Array1<f64> =
                Array1::from_shape_simple_fn(n, || 0.5 * rng.sample::<f64, _>(StandardNormal));
            let y = ytilde + &noise;
            let labels = AggregateLabels::new(b.bag_means(y.view()), AggregateKind::LlpMean);
            let est = crate::estimators::fit_bag_llp(ds.features.view(), &b, &labels).unwrap();
            total += estimation_error(&est, theta_star.view()).unwrap();
        }
        let mean = total / draws as f64;
        assert!(
            (mean - exact).abs() <= 0.1 * exact,
            "simulated {mean} vs exact {exact}"
        );
    }

    #[test]
    fn equal_bag_spread_equals_scaled_clustering_cost() {
        let mut rng = rng_from_seed(77);
        let n = 60;
        let k = 5;
        let x = normals(n, 3, 78);
        let y = normals(n, 1, 79).column(0).to_owned();
        let b = random_bagging(n, k, &mut rng).unwrap();
        // Recompute the bracket the long way and compare with the clustering
        // cost route.
        let mut bracket = 0.0;
        for bag in b.members() {
            let size = bag.len() as f64;
            let sum: f64 = bag.iter().map(|&i| y[i]).sum();
            let sq: f64 = bag.iter().map(|&i| y[i] * y[i]).sum();
            bracket += sq / size - (sum / size).powi(2);
        }
        let km_scaled = kmeans_objective_1d(y.view(), &b) / k as f64;
        assert!(
            (bracket - km_scaled).abs() <= 1e-10 * km_scaled.max(1.0),
            "bracket {bracket} vs scaled clustering cost {km_scaled}"
        );
        // And the full bound at sigma = 0 is the pseudo-inverse gain times
        // that bracket.
        let bound = agg_mir_bound(x.view(), y.view(), 0.0, &b).unwrap();
        let s = centroid_spectrum(x.view(), &b).unwrap();
        let direct = s.op_norm_pinv.powi(2) * bracket;
        assert!((bound - direct).abs() <= 1e-19 + 1e-12 * direct);
    }

    #[test]
    fn agg_mir_bound_is_zero_for_bagwise_constant_labels() {
        let x = normals(40, 3, 41);
        let mut rng = rng_from_seed(42);
        let b = random_bagging(40, 4, &mut rng).unwrap();
        let mut y = Array1::zeros(40);
        for (l, bag) in b.members().iter().enumerate() {
            for &i in bag {
                y[i] = l as f64 * 0.1 + 0.3;
            }
        }
        assert_eq!(agg_mir_bound(x.view(), y.view(), 0.0, &b).unwrap(), 0.0);
    }

    #[test]
    fn agg_mir_bound_dominates_simulated_error() {
        let (n, d, k) = (200, 4, 5);
        let mut rng = rng_from_seed(43);
        let spec = DataSpec {
            n,
            d,
            family: DataFamily::Isotropic,
            sigma: 0.5,
            seed: 0,
        };
        let (x, _) = gen_features(&spec, &mut rng).unwrap();
        let ds = attach_labels(x, 0.5, &mut rng);
        let ytilde = ds.expected_labels.as_ref().unwrap();
        let theta_star = ds.theta_star.as_ref().unwrap();
        let b = random_bagging(n, k, &mut rng).unwrap();
        let bound = agg_mir_bound(ds.features.view(), ytilde.view(), ds.noise_sigma, &b).unwrap();
        for batch in 0..5 {
            let mut total = 0.0;
            for _ in 0..100 {
                let noise: Array1<f64> =
                    Array1::from_shape_simple_fn(n, || 0.5 * rng.sample::<f64, _>(StandardNormal));
                let y = ytilde + &noise;
                let draw = sample_attribution(&b, &mut rng);
                let values = Array1::from_iter(draw.chosen.iter().map(|&i| y[i]));
                let labels = AggregateLabels::new(values, AggregateKind::MirSample);
                let est = fit_agg_mir(ds.features.view(), &b, &labels).unwrap();
                total += estimation_error(&est, theta_star.view()).unwrap();
            }
            let mean = total / 100.0;
            assert!(
                mean <= bound,
                "batch {batch}: mean error {mean} exceeds bound {bound}"
            );
        }
    }

    #[test]
    fn unit_bag_chernoff_floor_reduces_to_quarter_eigenvalue() {
        let x = normals(50, 3, 51);
        let cf = chernoff_eig_floor(x.view(), 1, 0.3, 0.5).unwrap();
        let (lo, _) = min_max_eigenvalues(x.t().dot(&x).view());
        let expected = 0.7 * lo / 4.0;
        assert!((cf.floor - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn chernoff_floor_holds_across_random_superbag_draws() {
        let (n, d, k) = (2000, 8, 5);
        let mut rng = rng_from_seed(53);
        let spec = DataSpec {
            n,
            d,
            family: DataFamily::Isotropic,
            sigma: 0.5,
            seed: 0,
        };
        let (x, _) = gen_features(&spec, &mut rng).unwrap();
        let cf = chernoff_eig_floor(x.view(), k, 0.9, 0.5).unwrap();
        let draws = 1000;
        let mut held = 0usize;
        for _ in 0..draws {
            let draw = superbag_random(n, k, &mut rng).unwrap();
            let mut gram = Array2::<f64>::zeros((d, d));
            for sel in &draw.selected {
                let mut c = Array1::<f64>::zeros(d);
                for &i in sel {
                    c += &x.row(i);
                }
                c /= k as f64;
                for a in 0..d {
                    for bcol in 0..d {
                        gram[(a, bcol)] += c[a] * c[bcol];
                    }
                }
            }
            let (lo, _) = min_max_eigenvalues(gram.view());
            if lo > cf.floor {
                held += 1;
            }
        }
        let fraction = held as f64 / draws as f64;
        assert!(fraction >= 1.0 - cf.failure_prob);
        // At delta = 0.9 the floor is far below the typical draw, so the
        // guarantee should hold essentially always.
        assert!(fraction >= 0.99, "fraction {fraction}");
    }

    #[test]
    fn chernoff_failure_prob_shrinks_with_more_rows() {
        let spec_small = DataSpec {
            n: 1000,
            d: 8,
            family: DataFamily::Isotropic,
            sigma: 0.5,
            seed: 0,
        };
        let spec_large = DataSpec { n: 4000, ..spec_small };
        let mut rng = rng_from_seed(54);
        let (x_small, _) = gen_features(&spec_small, &mut rng).unwrap();
        let (x_large, _) = gen_features(&spec_large, &mut rng).unwrap();
        let fp_small = chernoff_eig_floor(x_small.view(), 5, 0.5, 0.5)
            .unwrap()
            .failure_prob;
        let fp_large = chernoff_eig_floor(x_large.view(), 5, 0.5, 0.5)
            .unwrap()
            .failure_prob;
        assert!(fp_large < fp_small);
    }

    #[test]
    fn superbag_delta_hand_examples() {
        let values = array![0.0, 0.0, 1.0, 1.0];
        let superbag = [0usize, 1, 2, 3];
        // One of each value per half: the half sums match and the merge is
        // free.
        let (closed, direct) =
            superbag_delta(values.view(), &superbag, (&[0, 2], &[1, 3])).unwrap();
        assert_eq!(closed, 0.0);
        assert!(direct.abs() <= 1e-12);
        // Like with like: merging costs (0 − 2)² / 4 = 1.
        let (closed, direct) =
            superbag_delta(values.view(), &superbag, (&[0, 1], &[2, 3])).unwrap();
        assert!((closed - 1.0).abs() <= 1e-12);
        assert!((direct - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn superbag_delta_paths_agree_and_stay_nonnegative() {
        let mut rng = rng_from_seed(57);
        for trial in 0..1000 {
            let k = rng.random_range(1..=6usize);
            let values: Array1<f64> =
                Array1::from_shape_simple_fn(2 * k, || rng.sample::<f64, _>(StandardNormal));
            let mut order: Vec<usize> = (0..2 * k).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            let superbag: Vec<usize> = (0..2 * k).collect();
            let (h1, h2) = order.split_at(k);
            let (closed, direct) = superbag_delta(values.view(), &superbag, (h1, h2)).unwrap();
            assert!(closed >= 0.0, "trial {trial}");
            assert!(direct >= -1e-12, "trial {trial}: direct {direct}");
            assert!(
                (closed - direct).abs() <= 1e-10 * closed.max(1.0),
                "trial {trial}: {closed} vs {direct}"
            );
        }
    }

    #[test]
    fn superbag_delta_rejects_bad_splits() {
        let values = array![1.0, 2.0, 3.0, 4.0];
        let superbag = [0usize, 1, 2, 3];
        // Overlapping halves.
        assert!(superbag_delta(values.view(), &superbag, (&[0, 1], &[1, 3])).is_err());
        // Unequal halves.
        assert!(superbag_delta(values.view(), &superbag, (&[0], &[1, 2, 3])).is_err());
        // Half uses an index outside the super-bag.
        assert!(superbag_delta(values.view(), &[0, 1, 2, 3], (&[0, 1], &[2, 5])).is_err());
    }

    #[test]
    fn sorted_superbags_pay_nonnegative_total_merge_penalty() {
        let mut rng = rng_from_seed(59);
        let values: Array1<f64> =
            Array1::from_shape_simple_fn(60, || rng.sample::<f64, _>(StandardNormal));
        let draw = superbag_sorted_agg_mir(values.view(), 3, &mut rng).unwrap();
        let mut total = 0.0;
        for (l, bag) in draw.super_bags.members().iter().enumerate() {
            let h1 = &draw.selected[l];
            let h2: Vec<usize> = bag.iter().copied().filter(|i| !h1.contains(i)).collect();
            let (closed, _) = superbag_delta(values.view(), bag, (h1, &h2)).unwrap();
            assert!(closed >= 0.0);
            total += closed;
        }
        assert!(total >= 0.0);
    }

    #[test]
    fn unit_bag_variance_residual_is_roundoff() {
        let x = centered(normals(24, 3, 61));
        let b = unit_bags(24);
        let dir = array![0.6, -0.8, 0.0];
        let residual = variance_decomposition_check(x.view(), &b, dir.view()).unwrap();
        let scale = x.dot(&dir).mapv(|v| v * v).sum();
        assert!(residual <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn single_bag_variance_terms_cancel() {
        let x = centered(normals(12, 2, 62));
        let assignment = vec![0usize; 12];
        let b = build_bagging(&assignment, 12).unwrap();
        let dir = array![1.0, 0.0];
        let residual = variance_decomposition_check(x.view(), &b, dir.view()).unwrap();
        let scale = x.dot(&dir).mapv(|v| v * v).sum();
        assert!(residual <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn random_instance_variance_residual_under_tolerance() {
        let mut rng = rng_from_seed(63);
        let x = centered(normals(60, 4, 64));
        let b = random_bagging(60, 3, &mut rng).unwrap();
        let mut dir: Array1<f64> =
            Array1::from_shape_simple_fn(4, || rng.sample::<f64, _>(StandardNormal));
        let norm = dir.dot(&dir).sqrt();
        dir /= norm;
        let residual = variance_decomposition_check(x.view(), &b, dir.view()).unwrap();
        let scale = x.dot(&dir).mapv(|v| v * v).sum();
        assert!(
            residual <= 1e-9 * scale.max(1.0),
            "residual {residual} vs scale {scale}"
        );
    }

    #[test]
    fn uncentered_features_fail_the_variance_check() {
        let mut x = normals(30, 2, 65);
        x.column_mut(0).mapv_inplace(|v| v + 5.0);
        let mut rng = rng_from_seed(66);
        let b = random_bagging(30, 3, &mut rng).unwrap();
        let dir = array![1.0, 0.0];
        assert!(variance_decomposition_check(x.view(), &b, dir.view()).is_err());
    }

    #[test]
    fn bound_report_rows_round_trip_plain_numbers() {
        let report = BoundReport {
            name: "instance-mir".to_string(),
            value: 2.5,
            empirical_error: 0.5,
        };
        assert_eq!(report.csv_row(), "instance-mir,2.5,0.5,5");
        let zero = BoundReport {
            name: "bag-llp".to_string(),
            value: 1.0,
            empirical_error: 0.0,
        };
        assert!(zero.ratio().is_infinite());
    }
}
