//! Dense linear algebra helpers: least squares via QR with explicit rank
//! detection, symmetric eigendecompositions, SPD solves, and operator norms.
//!
//! Nothing here ever forms a matrix inverse. Rank deficiency is detected from
//! the singular values of the triangular QR factor (which equal those of the
//! original matrix) at a relative threshold of 1e-10, and reported as an
//! error instead of falling back to a pseudo-inverse.

use nalgebra::{DMatrix, DVector, Dyn};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::BagLearnError;

/// Relative singular-value cutoff below which a matrix is declared
/// rank-deficient.
pub const RANK_REL_TOL: f64 = 1e-10;

fn to_na(x: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(x.nrows(), x.ncols(), x.iter().copied())
}

fn to_na_vec(v: ArrayView1<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

fn from_na_vec(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().copied())
}

/// QR factorization of a tall matrix, reused across multiple right-hand
/// sides. Holds the singular values of the R factor for rank queries.
pub struct TallQr {
    qr: nalgebra::linalg::QR<f64, Dyn, Dyn>,
    r: DMatrix<f64>,
    rows: usize,
    cols: usize,
    /// Singular values of R (= singular values of the input), descending.
    sigma: Vec<f64>,
}

impl TallQr {
    pub fn new(x: ArrayView2<f64>) -> Self {
        let rows = x.nrows();
        let cols = x.ncols();
        let qr = to_na(x).qr();
        let r = qr.r();
        let svd = r.clone().svd(false, false);
        let mut sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
        sigma.sort_by(|a, b| b.total_cmp(a));
        TallQr {
            qr,
            r,
            rows,
            cols,
            sigma,
        }
    }

    /// Number of singular values above `RANK_REL_TOL` times the largest.
    pub fn rank(&self) -> usize {
        let cutoff = RANK_REL_TOL * self.sigma.first().copied().unwrap_or(0.0);
        self.sigma.iter().filter(|&&s| s > cutoff).count()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }

    fn require_full_rank(&self) -> Result<(), BagLearnError> {
        let rank = self.rank();
        if rank < self.cols {
            Err(BagLearnError::RankDeficient {
                rank,
                cols: self.cols,
            })
        } else {
            Ok(())
        }
    }

    /// Least-squares solution of `min ‖Xθ − rhs‖₂` via `Rθ = Qᵀrhs`.
    pub fn solve(&self, rhs: ArrayView1<f64>) -> Result<Array1<f64>, BagLearnError> {
        if rhs.len() != self.rows {
            return Err(BagLearnError::dim(format!(
                "rhs has {} entries for {} rows",
                rhs.len(),
                self.rows
            )));
        }
        self.require_full_rank()?;
        let mut c = to_na_vec(rhs);
        self.qr.q_tr_mul(&mut c);
        let top = c.rows(0, self.cols).into_owned();
        let theta = self
            .r
            .solve_upper_triangular(&top)
            .ok_or(BagLearnError::RankDeficient {
                rank: self.rank(),
                cols: self.cols,
            })?;
        Ok(from_na_vec(&theta))
    }

    /// Solves `XᵀXθ = v` through the factorization (`RᵀRθ = v`), for callers
    /// that assemble the right-hand side from sufficient statistics instead
    /// of materializing an n-length label vector.
    pub fn solve_gram(&self, v: ArrayView1<f64>) -> Result<Array1<f64>, BagLearnError> {
        if v.len() != self.cols {
            return Err(BagLearnError::dim(format!(
                "gram rhs has {} entries for {} columns",
                v.len(),
                self.cols
            )));
        }
        self.require_full_rank()?;
        let v = to_na_vec(v);
        let w = self
            .r
            .tr_solve_upper_triangular(&v)
            .ok_or(BagLearnError::RankDeficient {
                rank: self.rank(),
                cols: self.cols,
            })?;
        let theta = self
            .r
            .solve_upper_triangular(&w)
            .ok_or(BagLearnError::RankDeficient {
                rank: self.rank(),
                cols: self.cols,
            })?;
        Ok(from_na_vec(&theta))
    }
}

/// One-shot least squares: `argmin ‖Xθ − rhs‖₂`.
pub fn lstsq(x: ArrayView2<f64>, rhs: ArrayView1<f64>) -> Result<Array1<f64>, BagLearnError> {
    TallQr::new(x).solve(rhs)
}

/// Eigendecomposition of a symmetric matrix. Eigenvalues ascending,
/// eigenvectors as matching columns.
pub fn sym_eigen(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let eig = to_na(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn min_max_eigenvalues(a: ArrayView2<f64>) -> (f64, f64) {
    let eig = to_na(a).symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Solves `Ax = b` for symmetric positive definite `A` via Cholesky.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>, BagLearnError> {
    let chol = to_na(a)
        .cholesky()
        .ok_or_else(|| BagLearnError::param("matrix is not positive definite"))?;
    Ok(from_na_vec(&chol.solve(&to_na_vec(b))))
}

/// Solves `AX = B` for SPD `A` and matrix right-hand side.
pub fn solve_spd_multi(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
) -> Result<Array2<f64>, BagLearnError> {
    let chol = to_na(a)
        .cholesky()
        .ok_or_else(|| BagLearnError::param("matrix is not positive definite"))?;
    let sol = chol.solve(&to_na(b));
    Ok(Array2::from_shape_fn((sol.nrows(), sol.ncols()), |(i, j)| {
        sol[(i, j)]
    }))
}

/// Largest singular value by power iteration on the Gram operator.
///
/// The start vector is fixed (a sine pattern, no realistic chance of being
/// orthogonal to the top singular subspace), tolerance 1e-10 relative on the
/// singular value estimate, capped at 1,000 iterations.
pub fn op_norm(b: ArrayView2<f64>) -> f64 {
    // Iterate in the smaller dimension so each sweep is two thin products.
    if b.nrows() < b.ncols() {
        return op_norm(b.t());
    }
    let cols = b.ncols();
    if cols == 0 || b.nrows() == 0 {
        return 0.0;
    }
    let mut v = Array1::from_shape_fn(cols, |j| 1.5 + ((j + 1) as f64).sin());
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut sigma = 0.0f64;
    for _ in 0..1000 {
        let w = b.dot(&v);
        let next = w.dot(&w).sqrt();
        if next == 0.0 {
            return 0.0;
        }
        let mut u = b.t().dot(&w);
        let un = u.dot(&u).sqrt();
        u /= un;
        let done = (next - sigma).abs() <= 1e-10 * next;
        sigma = next;
        v = u;
        if done {
            break;
        }
    }
    sigma
}

/// Squared Frobenius norm.
pub fn frobenius_norm_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn test_matrix(rows: usize, cols: usize) -> Array2<f64> {
        // Deterministic, well-conditioned for small sizes.
        Array2::from_shape_fn((rows, cols), |(i, j)| {
            ((i * cols + j + 1) as f64).sin() + if i == j { 2.0 } else { 0.0 }
        })
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let x = test_matrix(12, 4);
        let theta = array![1.0, -2.0, 0.5, 3.0];
        let y = x.dot(&theta);
        let fit = lstsq(x.view(), y.view()).unwrap();
        assert_abs_diff_eq!(fit, theta, epsilon = 1e-9);
    }

    #[test]
    fn lstsq_matches_normal_equations_on_noisy_rhs() {
        let x = test_matrix(20, 3);
        let y = Array1::from_shape_fn(20, |i| (i as f64 * 0.713).cos() * 2.0);
        let fit = lstsq(x.view(), y.view()).unwrap();
        let xtx = x.t().dot(&x);
        let xty = x.t().dot(&y);
        let via_normal = solve_spd(xtx.view(), xty.view()).unwrap();
        assert_abs_diff_eq!(fit, via_normal, epsilon = 1e-9);
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let mut x = Array2::zeros((10, 3));
        for i in 0..10 {
            x[[i, 0]] = i as f64 + 1.0;
            x[[i, 1]] = (i as f64).sin();
            x[[i, 2]] = x[[i, 0]]; // exact copy of column 0
        }
        let y = Array1::ones(10);
        match lstsq(x.view(), y.view()) {
            Err(BagLearnError::RankDeficient { rank, cols }) => {
                assert_eq!((rank, cols), (2, 3));
            }
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn solve_gram_agrees_with_least_squares() {
        let x = test_matrix(15, 4);
        let y = Array1::from_shape_fn(15, |i| (i as f64).sin() - 0.3);
        let qr = TallQr::new(x.view());
        let direct = qr.solve(y.view()).unwrap();
        let v = x.t().dot(&y);
        let via_gram = qr.solve_gram(v.view()).unwrap();
        assert_abs_diff_eq!(direct, via_gram, epsilon = 1e-10);
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        let x = test_matrix(9, 3);
        let qr = TallQr::new(x.view());
        let g = x.t().dot(&x);
        let (lo, hi) = min_max_eigenvalues(g.view());
        assert_abs_diff_eq!(qr.sigma_min().powi(2), lo, epsilon = 1e-9 * hi);
        assert_abs_diff_eq!(qr.sigma_max().powi(2), hi, epsilon = 1e-9 * hi);
    }

    #[test]
    fn sym_eigen_reconstructs_matrix() {
        let a0 = test_matrix(5, 5);
        let a = &a0 + &a0.t(); // symmetrize
        let (vals, vecs) = sym_eigen(a.view());
        assert!(vals.windows(2).into_iter().all(|w| w[0] <= w[1]));
        let lam = Array2::from_diag(&vals);
        let back = vecs.dot(&lam).dot(&vecs.t());
        assert_abs_diff_eq!(back, a, epsilon = 1e-9);
    }

    #[test]
    fn op_norm_matches_full_svd() {
        let b = test_matrix(10, 6);
        let sv = nalgebra::DMatrix::from_row_iterator(10, 6, b.iter().copied())
            .svd(false, false)
            .singular_values;
        let expect = sv.iter().copied().fold(0.0f64, f64::max);
        assert_abs_diff_eq!(op_norm(b.view()), expect, epsilon = 1e-9 * expect);
        // Wide orientation takes the transposed path.
        assert_abs_diff_eq!(op_norm(b.t()), expect, epsilon = 1e-9 * expect);
    }

    #[test]
    fn op_norm_of_zero_matrix_is_zero() {
        let z = Array2::<f64>::zeros((4, 3));
        assert_eq!(op_norm(z.view()), 0.0);
    }

    #[test]
    fn spd_multi_solves_each_column() {
        let a0 = test_matrix(4, 4);
        let a = a0.t().dot(&a0) + Array2::<f64>::eye(4); // SPD
        let b = test_matrix(4, 2);
        let x = solve_spd_multi(a.view(), b.view()).unwrap();
        assert_abs_diff_eq!(a.dot(&x), b, epsilon = 1e-9);
    }

    #[test]
    fn frobenius_matches_manual_sum() {
        let a = array![[1.0, 2.0], [3.0, -4.0]];
        assert_abs_diff_eq!(frobenius_norm_sq(a.view()), 30.0, epsilon = 1e-12);
    }
}
