//! Core bag types: partitions of instances, aggregate labels, and the sparse
//! matrix encodings the estimators manipulate.
//!
//! A `Bagging` partitions instances `0..n` into `m` bags, each of size at
//! least `min_size`. The row-normalized membership matrix `S` (m×n, entry
//! `1/|B_l|` on members of bag `l`) and random attribution draws (one chosen
//! member per bag) are derived views; they are kept sparse because the
//! estimators only ever need `S·X`, `S·y`, or per-bag reductions.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::BagLearnError;

/// How a bag's aggregate label was formed from its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateKind {
    /// The label of one uniformly chosen member.
    MirSample,
    /// The mean of the member labels.
    LlpMean,
}

/// One aggregate label per bag, with provenance needed by the privacy layer.
#[derive(Debug, Clone)]
pub struct AggregateLabels {
    pub values: Array1<f64>,
    pub kind: AggregateKind,
    /// True once Gaussian noise has been added for label privacy.
    pub privatized: bool,
    /// Standard deviation of that noise; 0 when not privatized.
    pub noise_std: f64,
}

impl AggregateLabels {
    pub fn new(values: Array1<f64>, kind: AggregateKind) -> Self {
        AggregateLabels {
            values,
            kind,
            privatized: false,
            noise_std: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A validated partition of `{0,…,n−1}` into bags.
///
/// Bags are canonicalized by ascending smallest member, so two baggings that
/// describe the same partition compare equal regardless of the bag numbering
/// they were built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bagging {
    assignment: Vec<usize>,
    bag_members: Vec<Vec<usize>>,
    min_size: usize,
}

impl Bagging {
    /// Number of instances.
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Number of bags.
    pub fn m(&self) -> usize {
        self.bag_members.len()
    }

    /// Configured minimum bag size (k).
    pub fn min_size(&self) -> usize {
        self.min_size
    }

    /// Bag index of each instance.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Members of each bag, sorted ascending.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.bag_members
    }

    pub fn bag_size(&self, l: usize) -> usize {
        self.bag_members[l].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bag_members.iter().map(Vec::len).collect()
    }

    /// `Some(k)` when every bag has exactly `k` members.
    pub fn uniform_size(&self) -> Option<usize> {
        let k = self.bag_members[0].len();
        if self.bag_members.iter().all(|b| b.len() == k) {
            Some(k)
        } else {
            None
        }
    }

    /// Per-bag sums of a length-n vector.
    pub fn bag_sums(&self, values: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.m());
        for (i, &l) in self.assignment.iter().enumerate() {
            out[l] += values[i];
        }
        out
    }

    /// Per-bag means of a length-n vector; this is `S·v`.
    pub fn bag_means(&self, values: ArrayView1<f64>) -> Array1<f64> {
        let mut out = self.bag_sums(values);
        for (l, bag) in self.bag_members.iter().enumerate() {
            out[l] /= bag.len() as f64;
        }
        out
    }

    /// Per-bag row sums of an n×d matrix (m×d result).
    pub fn bag_row_sums(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let d = x.ncols();
        let mut out = Array2::zeros((self.m(), d));
        for (i, &l) in self.assignment.iter().enumerate() {
            let mut row = out.row_mut(l);
            row += &x.row(i);
        }
        out
    }

    /// Per-bag centroids of an n×d matrix; this is `S·X` (m×d).
    pub fn bag_row_means(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = self.bag_row_sums(x);
        for (l, bag) in self.bag_members.iter().enumerate() {
            let mut row = out.row_mut(l);
            row /= bag.len() as f64;
        }
        out
    }

    /// Expands a per-bag vector to instances: entry i gets its bag's value.
    pub fn broadcast(&self, bag_values: ArrayView1<f64>) -> Array1<f64> {
        Array1::from_iter(self.assignment.iter().map(|&l| bag_values[l]))
    }
}

/// Validates an assignment vector and produces a canonical [`Bagging`].
///
/// Bag indices must be contiguous from 0 and every bag must reach `min_size`.
pub fn build_bagging(assignment: &[usize], min_size: usize) -> Result<Bagging, BagLearnError> {
    if min_size == 0 {
        return Err(BagLearnError::param("min_size must be at least 1"));
    }
    if assignment.len() < min_size {
        return Err(BagLearnError::param(format!(
            "{} instances cannot form a bag of size {}",
            assignment.len(),
            min_size
        )));
    }
    let m = 1 + *assignment.iter().max().expect("nonempty assignment");
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, &l) in assignment.iter().enumerate() {
        members[l].push(i);
    }
    if let Some(missing) = members.iter().position(Vec::is_empty) {
        return Err(BagLearnError::NonContiguousBagIndex { missing });
    }
    // Canonical order: bags sorted by smallest member. Members are already
    // ascending because instances were scanned in order.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&l| members[l][0]);
    let mut canonical: Vec<Vec<usize>> = Vec::with_capacity(m);
    let mut relabel = vec![0usize; m];
    for (new_l, &old_l) in order.iter().enumerate() {
        relabel[old_l] = new_l;
        canonical.push(std::mem::take(&mut members[old_l]));
    }
    for (new_l, bag) in canonical.iter().enumerate() {
        if bag.len() < min_size {
            return Err(BagLearnError::BagTooSmall {
                bag_index: new_l,
                size: bag.len(),
                min_size,
            });
        }
    }
    let assignment = assignment.iter().map(|&l| relabel[l]).collect();
    Ok(Bagging {
        assignment,
        bag_members: canonical,
        min_size,
    })
}

/// Sparse row-normalized membership matrix `S` (m×n).
#[derive(Debug, Clone)]
pub struct BaggingMatrix {
    pub rows: usize,
    pub cols: usize,
    members: Vec<Vec<usize>>,
}

impl BaggingMatrix {
    /// `S·v` for a length-n vector: the per-bag means.
    pub fn mul_vec(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.rows);
        for (l, bag) in self.members.iter().enumerate() {
            let sum: f64 = bag.iter().map(|&i| v[i]).sum();
            out[l] = sum / bag.len() as f64;
        }
        out
    }

    /// `S·X` for an n×d matrix: the per-bag centroids.
    pub fn mul_mat(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let d = x.ncols();
        let mut out = Array2::zeros((self.rows, d));
        for (l, bag) in self.members.iter().enumerate() {
            let mut row = out.row_mut(l);
            for &i in bag {
                row += &x.row(i);
            }
            row /= bag.len() as f64;
        }
        out
    }

    /// Diagonal of `S·Sᵀ`, which is exactly `1/|B_l|`.
    pub fn gram_diagonal(&self) -> Array1<f64> {
        Array1::from_iter(self.members.iter().map(|b| 1.0 / b.len() as f64))
    }

    /// Dense m×n form, for small inputs and tests.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (l, bag) in self.members.iter().enumerate() {
            let w = 1.0 / bag.len() as f64;
            for &i in bag {
                out[[l, i]] = w;
            }
        }
        out
    }

    /// Dense m×n membership matrix with `1/√|B_l|` on members. The symmetric
    /// n×n broadcast operator factors as `MᵀM`.
    pub fn normalized_membership_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (l, bag) in self.members.iter().enumerate() {
            let w = 1.0 / (bag.len() as f64).sqrt();
            for &i in bag {
                out[[l, i]] = w;
            }
        }
        out
    }

    /// Dense n×n symmetric broadcast operator: entry (i,j) is `1/|B_l|` when
    /// i and j share bag l, else 0.
    pub fn broadcast_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.cols, self.cols));
        for bag in &self.members {
            let w = 1.0 / bag.len() as f64;
            for &i in bag {
                for &j in bag {
                    out[[i, j]] = w;
                }
            }
        }
        out
    }
}

/// The membership matrix of a bagging.
pub fn bagging_matrix(b: &Bagging) -> BaggingMatrix {
    BaggingMatrix {
        rows: b.m(),
        cols: b.n(),
        members: b.members().to_vec(),
    }
}

/// One uniformly chosen member per bag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributionDraw {
    pub chosen: Vec<usize>,
}

/// Samples an attribution: `chosen[l]` uniform over bag l, independent across
/// bags. The induced 0/1 selection matrix has expectation equal to `S`.
pub fn sample_attribution<R: Rng>(b: &Bagging, rng: &mut R) -> AttributionDraw {
    let chosen = b
        .members()
        .iter()
        .map(|bag| bag[rng.random_range(0..bag.len())])
        .collect();
    AttributionDraw { chosen }
}

/// Writes a partition as text: one `instance_index bag_index` line per
/// instance, in instance order.
pub fn write_bagging<W: std::io::Write>(b: &Bagging, w: &mut W) -> Result<(), BagLearnError> {
    for (i, &l) in b.assignment().iter().enumerate() {
        writeln!(w, "{i} {l}")?;
    }
    Ok(())
}

/// Reads the text form produced by [`write_bagging`].
///
/// Lines may list instances in any order but must cover `0..n` exactly
/// once; bag indices and the `min_size` floor are validated as in
/// [`build_bagging`].
pub fn read_bagging<R: std::io::BufRead>(
    r: R,
    min_size: usize,
) -> Result<Bagging, BagLearnError> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let mut fields = text.split_whitespace();
        let parse = |field: Option<&str>, what: &str| -> Result<usize, BagLearnError> {
            field
                .ok_or_else(|| BagLearnError::Parse {
                    line: line_no,
                    context: format!("missing {what}"),
                })?
                .parse()
                .map_err(|_| BagLearnError::Parse {
                    line: line_no,
                    context: format!("{what} is not a nonnegative integer: {text:?}"),
                })
        };
        let instance = parse(fields.next(), "instance index")?;
        let bag = parse(fields.next(), "bag index")?;
        if fields.next().is_some() {
            return Err(BagLearnError::Parse {
                line: line_no,
                context: format!("expected two fields, got more: {text:?}"),
            });
        }
        pairs.push((instance, bag));
    }
    let n = pairs.len();
    let mut assignment = vec![usize::MAX; n];
    for &(i, l) in &pairs {
        if i >= n {
            return Err(BagLearnError::Parse {
                line: 0,
                context: format!("instance index {i} out of range for {n} lines"),
            });
        }
        if assignment[i] != usize::MAX {
            return Err(BagLearnError::Parse {
                line: 0,
                context: format!("instance index {i} appears twice"),
            });
        }
        assignment[i] = l;
    }
    build_bagging(&assignment, min_size)
}

/// Size-constrained clustering objective of a 1-d value vector under a fixed
/// partition: Σ_l Σ_{i∈B_l} (v_i − μ_l)² with μ_l the bag mean.
pub fn kmeans_objective_1d(values: ArrayView1<f64>, b: &Bagging) -> f64 {
    let mut total = 0.0;
    for bag in b.members() {
        let mean: f64 = bag.iter().map(|&i| values[i]).sum::<f64>() / bag.len() as f64;
        total += bag.iter().map(|&i| (values[i] - mean).powi(2)).sum::<f64>();
    }
    total
}

/// Multivariate clustering objective: Σ_l Σ_{i∈B_l} ‖x_i − centroid_l‖².
///
/// Equals the sum of [`kmeans_objective_1d`] over the projections onto any
/// orthonormal basis.
pub fn kmeans_objective_multi(x: ArrayView2<f64>, b: &Bagging) -> f64 {
    let centroids = b.bag_row_means(x);
    let mut total = 0.0;
    for (i, &l) in b.assignment().iter().enumerate() {
        let diff = &x.row(i) - &centroids.row(l);
        total += diff.dot(&diff);
    }
    total
}
