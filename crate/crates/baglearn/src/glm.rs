//! Canonical exponential-family regression from aggregate labels.
//!
//! A canonical family is described by its cumulant `b`: the mean of a label
//! at location η is b′(η) and its variance is a(φ)·b″(η). Two fitting
//! objectives are supported. The instance-level one gives every member of a
//! bag the bag's released label; the aggregate one regresses bag centroids
//! on bag labels directly. Both are convex in θ, so a damped Newton solver
//! with the closed-form Hessian XᵀWX handles all families.
//!
//! Alongside the fits, this module computes upper bounds on the expected
//! squared gradient norm at the target parameter (the quantity that drives
//! parameter error under strong convexity), the range-based bagging
//! objective whose minimizer is a sorted chunking, and the strong-convexity
//! gap check that converts a gradient norm into a parameter error cap.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Poisson, StandardNormal};

use crate::bag::{AggregateKind, AggregateLabels, Bagging};
use crate::error::BagLearnError;
use crate::estimators::{LossKind, ModelEstimate};
use crate::linalg::{min_max_eigenvalues, op_norm, solve_spd, TallQr};

/// Largest |η| at which Poisson cumulants are evaluated; beyond it exp(η)
/// would dwarf every other term or overflow outright.
pub const POISSON_ETA_CAP: f64 = 30.0;

static POISSON_CLAMP_EVENTS: AtomicUsize = AtomicUsize::new(0);

/// Number of Poisson evaluations so far that hit the ±30 location cap.
/// Monotone process-wide counter; compare before/after a computation to see
/// whether it saturated.
pub fn poisson_clamp_events() -> usize {
    POISSON_CLAMP_EVENTS.load(Ordering::Relaxed)
}

fn clamp_poisson_eta(eta: f64) -> f64 {
    if eta.abs() <= POISSON_ETA_CAP {
        eta
    } else {
        POISSON_CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
        eta.clamp(-POISSON_ETA_CAP, POISSON_ETA_CAP)
    }
}

fn sigmoid(eta: f64) -> f64 {
    // split on sign so neither branch exponentiates a positive number
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// The supported canonical families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmKind {
    /// b(η) = η²/2; identity mean, additive Gaussian noise.
    Gaussian,
    /// b(η) = log(1 + eᵑ); sigmoid mean, Bernoulli labels.
    Logistic,
    /// b(η) = eᵑ; exponential mean, Poisson counts.
    Poisson,
}

/// A canonical exponential family with density exp((yη − b(η))/a(φ) + c).
///
/// `dispersion` is φ and `weights` holds the per-row w_i with
/// a_i(φ) = φ/w_i; `None` means unit weights. Instance-level routines index
/// the weights by instance, aggregate-level routines by bag, so a family
/// value is tied to one design size at a time.
#[derive(Debug, Clone)]
pub struct GlmFamily {
    pub kind: GlmKind,
    pub dispersion: f64,
    pub weights: Option<Array1<f64>>,
}

impl GlmFamily {
    pub fn new(kind: GlmKind) -> Self {
        GlmFamily {
            kind,
            dispersion: 1.0,
            weights: None,
        }
    }

    pub fn gaussian() -> Self {
        Self::new(GlmKind::Gaussian)
    }

    pub fn logistic() -> Self {
        Self::new(GlmKind::Logistic)
    }

    pub fn poisson() -> Self {
        Self::new(GlmKind::Poisson)
    }

    pub fn validate(&self) -> Result<(), BagLearnError> {
        if !self.dispersion.is_finite() || self.dispersion <= 0.0 {
            return Err(BagLearnError::param(format!(
                "dispersion must be positive and finite, got {}",
                self.dispersion
            )));
        }
        if let Some(w) = &self.weights {
            if let Some(bad) = w.iter().find(|v| !v.is_finite() || **v <= 0.0) {
                return Err(BagLearnError::param(format!(
                    "weights must be positive and finite, got {bad}"
                )));
            }
        }
        Ok(())
    }

    /// Cumulant b(η).
    pub fn b(&self, eta: f64) -> f64 {
        match self.kind {
            GlmKind::Gaussian => 0.5 * eta * eta,
            GlmKind::Logistic => {
                // log(1 + e^η) without overflow on either tail
                if eta > 0.0 {
                    eta + (-eta).exp().ln_1p()
                } else {
                    eta.exp().ln_1p()
                }
            }
            GlmKind::Poisson => clamp_poisson_eta(eta).exp(),
        }
    }

    /// Mean function b′(η); strictly increasing for every supported family.
    pub fn b_prime(&self, eta: f64) -> f64 {
        match self.kind {
            GlmKind::Gaussian => eta,
            GlmKind::Logistic => sigmoid(eta),
            GlmKind::Poisson => clamp_poisson_eta(eta).exp(),
        }
    }

    /// Variance function b″(η); strictly positive for every supported family.
    pub fn b_double_prime(&self, eta: f64) -> f64 {
        match self.kind {
            GlmKind::Gaussian => 1.0,
            GlmKind::Logistic => {
                let p = sigmoid(eta);
                p * (1.0 - p)
            }
            GlmKind::Poisson => clamp_poisson_eta(eta).exp(),
        }
    }

    /// 1/a_i(φ) = w_i/φ for each of `len` design rows.
    fn inv_dispersion(&self, len: usize) -> Result<Array1<f64>, BagLearnError> {
        match &self.weights {
            None => Ok(Array1::from_elem(len, 1.0 / self.dispersion)),
            Some(w) if w.len() == len => Ok(w.mapv(|wi| wi / self.dispersion)),
            Some(w) => Err(BagLearnError::dim(format!(
                "{} family weights for {} design rows",
                w.len(),
                len
            ))),
        }
    }
}

/// Σ_i (b(η_i) − t_i η_i)/a_i over the rows of `design`; the negative
/// log-likelihood of targets t up to a θ-free constant.
fn canonical_objective(
    design: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    theta: ArrayView1<f64>,
    inv_a: &Array1<f64>,
    fam: &GlmFamily,
) -> f64 {
    let etas = design.dot(&theta);
    let mut total = 0.0;
    for i in 0..etas.len() {
        total += inv_a[i] * (fam.b(etas[i]) - targets[i] * etas[i]);
    }
    total
}

/// designᵀ D⁻¹ (targets − b′(design·θ)): minus the objective gradient.
fn canonical_ascent_gradient(
    design: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    etas: &Array1<f64>,
    inv_a: &Array1<f64>,
    fam: &GlmFamily,
) -> Array1<f64> {
    let resid = Array1::from_shape_fn(etas.len(), |i| {
        inv_a[i] * (targets[i] - fam.b_prime(etas[i]))
    });
    design.t().dot(&resid)
}

/// designᵀ W design with W = Diag(b″(η_i)/a_i); the objective Hessian.
fn canonical_hessian(
    design: ArrayView2<f64>,
    etas: &Array1<f64>,
    inv_a: &Array1<f64>,
    fam: &GlmFamily,
) -> Array2<f64> {
    let mut weighted = design.to_owned();
    for (i, mut row) in weighted.outer_iter_mut().enumerate() {
        let w = inv_a[i] * fam.b_double_prime(etas[i]);
        row.mapv_inplace(|v| v * w);
    }
    design.t().dot(&weighted)
}

fn check_design(
    x: ArrayView2<f64>,
    b: &Bagging,
    theta: ArrayView1<f64>,
) -> Result<(), BagLearnError> {
    if x.nrows() != b.n() {
        return Err(BagLearnError::dim(format!(
            "{} feature rows for {} instances",
            x.nrows(),
            b.n()
        )));
    }
    if theta.len() != x.ncols() {
        return Err(BagLearnError::dim(format!(
            "theta has {} coordinates for {} columns",
            theta.len(),
            x.ncols()
        )));
    }
    Ok(())
}

fn check_agg(b: &Bagging, agg: &AggregateLabels) -> Result<(), BagLearnError> {
    if agg.kind != AggregateKind::MirSample {
        return Err(BagLearnError::param(format!(
            "GLM fits need MirSample labels, got {:?}",
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

/// Value of the instance-level objective Σ_i (b(x_iᵀθ) − z_i x_iᵀθ)/a_i,
/// where z is the per-bag label broadcast to members.
pub fn glm_instance_mir_objective(
    x: ArrayView2<f64>,
    broadcast_labels: ArrayView1<f64>,
    theta: ArrayView1<f64>,
    fam: &GlmFamily,
) -> Result<f64, BagLearnError> {
    fam.validate()?;
    if broadcast_labels.len() != x.nrows() {
        return Err(BagLearnError::dim(format!(
            "{} broadcast labels for {} feature rows",
            broadcast_labels.len(),
            x.nrows()
        )));
    }
    if theta.len() != x.ncols() {
        return Err(BagLearnError::dim(format!(
            "theta has {} coordinates for {} columns",
            theta.len(),
            x.ncols()
        )));
    }
    let inv_a = fam.inv_dispersion(x.nrows())?;
    Ok(canonical_objective(x, broadcast_labels, theta, &inv_a, fam))
}

/// XᵀD⁻¹(z − b′(Xθ)) for the broadcast labels z: minus the gradient of
/// [`glm_instance_mir_objective`], so it vanishes exactly at a stationary
/// point. For the Gaussian family this is the least-squares residual
/// gradient Xᵀ(z − Xθ)/φ.
pub fn glm_instance_mir_gradient(
    x: ArrayView2<f64>,
    b: &Bagging,
    broadcast_labels: ArrayView1<f64>,
    theta: ArrayView1<f64>,
    fam: &GlmFamily,
) -> Result<Array1<f64>, BagLearnError> {
    fam.validate()?;
    check_design(x, b, theta)?;
    if broadcast_labels.len() != b.n() {
        return Err(BagLearnError::dim(format!(
            "{} broadcast labels for {} instances",
            broadcast_labels.len(),
            b.n()
        )));
    }
    let inv_a = fam.inv_dispersion(x.nrows())?;
    let etas = x.dot(&theta);
    Ok(canonical_ascent_gradient(
        x,
        broadcast_labels,
        &etas,
        &inv_a,
        fam,
    ))
}

/// Value of the aggregate objective Σ_l (b(c_lᵀθ) − y_l c_lᵀθ)/a_l over bag
/// centroids c_l and bag labels y_l.
pub fn glm_agg_mir_objective(
    x: ArrayView2<f64>,
    b: &Bagging,
    agg: &AggregateLabels,
    theta: ArrayView1<f64>,
    fam: &GlmFamily,
) -> Result<f64, BagLearnError> {
    fam.validate()?;
    check_design(x, b, theta)?;
    check_agg(b, agg)?;
    let sx = b.bag_row_means(x);
    let inv_a = fam.inv_dispersion(b.m())?;
    Ok(canonical_objective(
        sx.view(),
        agg.values.view(),
        theta,
        &inv_a,
        fam,
    ))
}

/// (SX)ᵀD⁻¹(y − b′(SXθ)) where SX stacks the bag centroids: minus the
/// gradient of [`glm_agg_mir_objective`].
pub fn glm_agg_mir_gradient(
    x: ArrayView2<f64>,
    b: &Bagging,
    agg: &AggregateLabels,
    theta: ArrayView1<f64>,
    fam: &GlmFamily,
) -> Result<Array1<f64>, BagLearnError> {
    fam.validate()?;
    check_design(x, b, theta)?;
    check_agg(b, agg)?;
    let sx = b.bag_row_means(x);
    let inv_a = fam.inv_dispersion(b.m())?;
    let etas = sx.dot(&theta);
    Ok(canonical_ascent_gradient(
        sx.view(),
        agg.values.view(),
        &etas,
        &inv_a,
        fam,
    ))
}

const NEWTON_ITER_CAP: usize = 200;

/// Damped Newton descent on a canonical objective. The Hessian XᵀWX is
/// positive definite whenever the design has full column rank (W > 0 for
/// every family), so each step is one Cholesky solve; backtracking keeps
/// steps inside the region where the quadratic model holds.
fn fit_canonical(
    design: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    fam: &GlmFamily,
    method: &'static str,
) -> Result<Array1<f64>, BagLearnError> {
    fam.validate()?;
    let n = design.nrows();
    let d = design.ncols();
    if targets.len() != n {
        return Err(BagLearnError::dim(format!(
            "{} targets for {n} design rows",
            targets.len()
        )));
    }
    let qr = TallQr::new(design);
    if qr.rank() < d {
        return Err(BagLearnError::RankDeficient {
            rank: qr.rank(),
            cols: d,
        });
    }
    let inv_a = fam.inv_dispersion(n)?;
    let tol = 1e-8 * n as f64;
    let mut theta = Array1::<f64>::zeros(d);
    let mut obj = canonical_objective(design, targets, theta.view(), &inv_a, fam);
    for iter in 0..NEWTON_ITER_CAP {
        let etas = design.dot(&theta);
        let ascent = canonical_ascent_gradient(design, targets, &etas, &inv_a, fam);
        let gnorm = ascent.dot(&ascent).sqrt();
        if gnorm <= tol {
            return Ok(theta);
        }
        let hess = canonical_hessian(design, &etas, &inv_a, fam);
        let step = solve_spd(hess.view(), ascent.view()).map_err(|_| {
            BagLearnError::NoConvergence {
                method,
                iterations: iter,
                residual: gnorm,
            }
        })?;
        // moving along +step decreases the objective at rate stepᵀ H step
        let slope = ascent.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &theta + &step.mapv(|v| v * t);
            let cand_obj = canonical_objective(design, targets, cand.view(), &inv_a, fam);
            if cand_obj <= obj - 1e-4 * t * slope {
                accepted = Some((cand, cand_obj));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, cand_obj)) => {
                theta = cand;
                obj = cand_obj;
            }
            None => {
                return Err(BagLearnError::NoConvergence {
                    method,
                    iterations: iter,
                    residual: gnorm,
                })
            }
        }
    }
    let etas = design.dot(&theta);
    let ascent = canonical_ascent_gradient(design, targets, &etas, &inv_a, fam);
    Err(BagLearnError::NoConvergence {
        method,
        iterations: NEWTON_ITER_CAP,
        residual: ascent.dot(&ascent).sqrt(),
    })
}

/// Newton fit of the instance-level objective: every member of a bag carries
/// the bag's sampled label. Gradient norm at the returned point is at most
/// 1e-8·n. Reduces to [`crate::estimators::fit_instance_mir`] for the
/// Gaussian family.
pub fn fit_glm_instance_mir(
    x: ArrayView2<f64>,
    b: &Bagging,
    agg: &AggregateLabels,
    fam: &GlmFamily,
) -> Result<ModelEstimate, BagLearnError> {
    check_agg(b, agg)?;
    if x.nrows() != b.n() {
        return Err(BagLearnError::dim(format!(
            "{} feature rows for {} instances",
            x.nrows(),
            b.n()
        )));
    }
    let z = b.broadcast(agg.values.view());
    let theta_hat = fit_canonical(x, z.view(), fam, "glm-instance-mir newton")?;
    Ok(ModelEstimate {
        theta_hat,
        loss_kind: LossKind::InstanceMir,
    })
}

/// Newton fit of the aggregate objective: bag centroids against sampled bag
/// labels. Needs at least d bags whose centroids span all d columns.
pub fn fit_glm_agg_mir(
    x: ArrayView2<f64>,
    b: &Bagging,
    agg: &AggregateLabels,
    fam: &GlmFamily,
) -> Result<ModelEstimate, BagLearnError> {
    check_agg(b, agg)?;
    if x.nrows() != b.n() {
        return Err(BagLearnError::dim(format!(
            "{} feature rows for {} instances",
            x.nrows(),
            b.n()
        )));
    }
    let sx = b.bag_row_means(x);
    let theta_hat = fit_canonical(sx.view(), agg.values.view(), fam, "glm-agg-mir newton")?;
    Ok(ModelEstimate {
        theta_hat,
        loss_kind: LossKind::AggMir,
    })
}

/// Upper bound on the expected squared norm of the instance gradient at
/// `theta_star`, over both label draws and member attribution. With
/// μ = b′(Xθ*) entrywise, S the within-bag averaging projection and m bags:
///
/// ```text
/// ‖XᵀD⁻¹‖²op · ( m(‖μ‖² + ‖Db″(Xθ*)‖₁) + ‖(S − I)μ‖² − ‖Sμ‖² )
/// ```
///
/// Since S is an orthogonal projection the last two terms equal
/// ‖μ‖² − 2‖Sμ‖², which keeps the bracket at least (m − 1)‖μ‖², so the
/// bound is nonnegative. For the Gaussian family ‖(S − I)μ‖² is exactly the
/// 1-d clustering cost of the noiseless labels under the bagging.
pub fn glm_instance_mir_bound(
    x: ArrayView2<f64>,
    b: &Bagging,
    theta_star: ArrayView1<f64>,
    fam: &GlmFamily,
) -> Result<f64, BagLearnError> {
    fam.validate()?;
    check_design(x, b, theta_star)?;
    let inv_a = fam.inv_dispersion(x.nrows())?;
    let etas = x.dot(&theta_star);
    let mu = etas.mapv(|e| fam.b_prime(e));
    let mut var_l1 = 0.0;
    for i in 0..etas.len() {
        var_l1 += fam.b_double_prime(etas[i]) / inv_a[i];
    }
    let smu = b.broadcast(b.bag_means(mu.view()).view());
    let mut s_minus_i = 0.0;
    for i in 0..mu.len() {
        s_minus_i += (smu[i] - mu[i]).powi(2);
    }
    let m = b.m() as f64;
    let core = m * (mu.dot(&mu) + var_l1) + s_minus_i - smu.dot(&smu);
    let mut scaled = x.to_owned();
    for (i, mut row) in scaled.outer_iter_mut().enumerate() {
        let w = inv_a[i];
        row.mapv_inplace(|v| v * w);
    }
    let op = op_norm(scaled.view());
    Ok(op * op * core)
}

/// Upper bound on the expected squared norm of the aggregate gradient at
/// `theta_star`. The design-dependent prefactor is ‖D⁻¹‖²op·λmax(XᵀX) and
/// the attribution term is the Jensen gap between bag-averaged means and
/// the mean at the bag-averaged location:
///
/// ```text
/// ‖D⁻¹‖²op · λmax(XᵀX) · ( m(‖μ‖² + ‖Db″(Xθ*)‖₁) + ‖Sμ − b′(SXθ*)‖² − ‖Sμ‖² )
/// ```
///
/// where S maps instance vectors to their m bag means. The gap vanishes for
/// the Gaussian family because b′ is affine.
pub fn glm_agg_mir_bound(
    x: ArrayView2<f64>,
    b: &Bagging,
    theta_star: ArrayView1<f64>,
    fam: &GlmFamily,
) -> Result<f64, BagLearnError> {
    fam.validate()?;
    check_design(x, b, theta_star)?;
    let inv_a = fam.inv_dispersion(x.nrows())?;
    let etas = x.dot(&theta_star);
    let mu = etas.mapv(|e| fam.b_prime(e));
    let mut var_l1 = 0.0;
    for i in 0..etas.len() {
        var_l1 += fam.b_double_prime(etas[i]) / inv_a[i];
    }
    let bag_mu = b.bag_means(mu.view());
    let bag_eta = b.bag_means(etas.view());
    let mut jensen = 0.0;
    for l in 0..b.m() {
        jensen += (bag_mu[l] - fam.b_prime(bag_eta[l])).powi(2);
    }
    let m = b.m() as f64;
    let core = m * (mu.dot(&mu) + var_l1) + jensen - bag_mu.dot(&bag_mu);
    let gram = x.t().dot(&x);
    let (_, lam_max) = min_max_eigenvalues(gram.view());
    let inv_a_max = inv_a.iter().fold(0.0f64, |acc, v| acc.max(*v));
    Ok(inv_a_max * inv_a_max * lam_max * core)
}

/// Sum over bags of the squared within-bag spread (max − min) of `values`.
///
/// When the values are b′ of within-bag locations and b′ is monotone, each
/// bag's Jensen gap is at most its spread, so this objective dominates the
/// clustering term of [`glm_agg_mir_bound`]. Minimizing it is therefore the
/// natural bag-design goal for aggregate GLM fits.
pub fn glm_range_objective(values: ArrayView1<f64>, b: &Bagging) -> Result<f64, BagLearnError> {
    if values.len() != b.n() {
        return Err(BagLearnError::dim(format!(
            "{} values for {} instances",
            values.len(),
            b.n()
        )));
    }
    let mut total = 0.0;
    for bag in b.members() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in bag {
            lo = lo.min(values[i]);
            hi = hi.max(values[i]);
        }
        total += (hi - lo).powi(2);
    }
    Ok(total)
}

/// The equal-size-k partition minimizing [`glm_range_objective`]: sort the
/// values and cut into consecutive chunks of k. Uncrossing two bags never
/// widens either spread, so some sorted chunking is optimal and with exact
/// sizes it is this one.
pub fn sorted_range_bagging(values: ArrayView1<f64>, k: usize) -> Result<Bagging, BagLearnError> {
    crate::strategies::label_kmeans_equal(values, k)
}

/// Strong-convexity error cap. If the objective is μ-strongly convex on the
/// segment from `theta_star` to `theta_hat` and `theta_hat` minimizes it,
/// then ‖θ̂ − θ*‖ ≤ ‖∇L(θ*)‖/μ. Returns (lhs, rhs) of that inequality with
/// μ̂ taken as the smallest Hessian eigenvalue over 11 evenly spaced segment
/// points; the gradient is evaluated on the instance-level objective with
/// the given broadcast labels.
pub fn strong_convexity_gap(
    x: ArrayView2<f64>,
    b: &Bagging,
    broadcast_labels: ArrayView1<f64>,
    theta_hat: ArrayView1<f64>,
    theta_star: ArrayView1<f64>,
    fam: &GlmFamily,
) -> Result<(f64, f64), BagLearnError> {
    fam.validate()?;
    check_design(x, b, theta_star)?;
    if theta_hat.len() != theta_star.len() {
        return Err(BagLearnError::dim(format!(
            "theta_hat has {} coordinates, theta_star {}",
            theta_hat.len(),
            theta_star.len()
        )));
    }
    let inv_a = fam.inv_dispersion(x.nrows())?;
    let d = theta_star.len();
    let mut mu_hat = f64::INFINITY;
    for step in 0..=10 {
        let t = step as f64 / 10.0;
        let point = Array1::from_shape_fn(d, |j| (1.0 - t) * theta_star[j] + t * theta_hat[j]);
        let etas = x.dot(&point);
        let hess = canonical_hessian(x, &etas, &inv_a, fam);
        let (lam_min, _) = min_max_eigenvalues(hess.view());
        mu_hat = mu_hat.min(lam_min);
    }
    if mu_hat <= 1e-10 {
        return Err(BagLearnError::NonStronglyConvex {
            min_curvature: mu_hat,
        });
    }
    let diff = Array1::from_shape_fn(d, |j| theta_hat[j] - theta_star[j]);
    let lhs = diff.dot(&diff).sqrt();
    let g = glm_instance_mir_gradient(x, b, broadcast_labels, theta_star, fam)?;
    let rhs = g.dot(&g).sqrt() / mu_hat;
    Ok((lhs, rhs))
}

/// Draws one label per location from the family's distribution: Gaussian
/// with mean η and variance a(φ), Bernoulli at sigmoid(η), Poisson at
/// exp(η). The mean is b′(η) in every case, so data generated here matches
/// the assumptions behind the GLM bounds.
pub fn sample_glm_labels<R: Rng>(
    etas: ArrayView1<f64>,
    fam: &GlmFamily,
    rng: &mut R,
) -> Result<Array1<f64>, BagLearnError> {
    fam.validate()?;
    let inv_a = fam.inv_dispersion(etas.len())?;
    let mut out = Array1::zeros(etas.len());
    for i in 0..etas.len() {
        out[i] = match fam.kind {
            GlmKind::Gaussian => {
                etas[i] + (1.0 / inv_a[i]).sqrt() * rng.sample::<f64, _>(StandardNormal)
            }
            GlmKind::Logistic => {
                if rng.random::<f64>() < sigmoid(etas[i]) {
                    1.0
                } else {
                    0.0
                }
            }
            GlmKind::Poisson => {
                let lambda = fam.b_prime(etas[i]);
                rng.sample(Poisson::new(lambda).expect("positive rate"))
            }
        };
    }
    Ok(out)
}
