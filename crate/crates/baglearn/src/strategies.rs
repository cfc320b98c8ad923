//! Bag construction strategies.
//!
//! Label-aware: exact 1-d clustering of the (expected) labels, either into
//! equal-size-k bags (sort and chunk, optimal among equal partitions) or into
//! min-size-k bags by dynamic programming. Label-agnostic: uniform random
//! bagging, balanced instance k-means (plain and covariance-whitened), and
//! the two super-bag samplers that draw one k-subset from each 2k-group.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::bag::{build_bagging, Bagging};
use crate::error::BagLearnError;
use crate::linalg;

/// Instances sorted ascending by value; the sort is stable so equal values
/// keep index order.
fn sorted_indices(values: ArrayView1<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

/// Optimal equal-size-k 1-d clustering: sort the values and cut into n/k
/// contiguous chunks. Contiguity of some optimum plus the exact-size
/// constraint force this chunking, so no search is needed.
pub fn label_kmeans_equal(values: ArrayView1<f64>, k: usize) -> Result<Bagging, BagLearnError> {
    if k == 0 {
        return Err(BagLearnError::param("k must be at least 1"));
    }
    let n = values.len();
    if n == 0 || !n.is_multiple_of(k) {
        return Err(BagLearnError::NotDivisible { n, divisor: k });
    }
    let idx = sorted_indices(values);
    let mut assignment = vec![0usize; n];
    for (pos, &i) in idx.iter().enumerate() {
        assignment[i] = pos / k;
    }
    build_bagging(&assignment, k)
}

/// Exact optimum of 1-d clustering with every bag of size ≥ k.
///
/// Dynamic program over contiguous segments of the sorted values. Segments
/// longer than 2k−1 never help: any segment of length ≥ 2k splits into two
/// feasible segments without raising the cost, so lengths range over
/// [k, 2k−1] only.
pub fn label_kmeans_minsize(values: ArrayView1<f64>, k: usize) -> Result<Bagging, BagLearnError> {
    if k == 0 {
        return Err(BagLearnError::param("k must be at least 1"));
    }
    let n = values.len();
    if n < k {
        return Err(BagLearnError::TooFewPoints { n, k });
    }
    let idx = sorted_indices(values);
    // Prefix sums of the sorted values and their squares.
    let mut p1 = vec![0.0f64; n + 1];
    let mut p2 = vec![0.0f64; n + 1];
    for (pos, &i) in idx.iter().enumerate() {
        p1[pos + 1] = p1[pos] + values[i];
        p2[pos + 1] = p2[pos] + values[i] * values[i];
    }
    let seg_cost = |a: usize, b: usize| -> f64 {
        let len = (b - a) as f64;
        let sum = p1[b] - p1[a];
        (p2[b] - p2[a]) - sum * sum / len
    };
    let mut best = vec![f64::INFINITY; n + 1];
    let mut cut = vec![0usize; n + 1]; // chosen segment length ending at j
    best[0] = 0.0;
    for j in k..=n {
        let max_len = (2 * k - 1).min(j);
        for len in k..=max_len {
            let i = j - len;
            if best[i].is_finite() {
                let cand = best[i] + seg_cost(i, j);
                if cand < best[j] {
                    best[j] = cand;
                    cut[j] = len;
                }
            }
        }
    }
    debug_assert!(best[n].is_finite(), "min-size DP must be feasible for n >= k");
    let mut boundaries = Vec::new();
    let mut j = n;
    while j > 0 {
        boundaries.push(j);
        j -= cut[j];
    }
    boundaries.reverse();
    let mut assignment = vec![0usize; n];
    let mut start = 0;
    for (bag, &end) in boundaries.iter().enumerate() {
        for pos in start..end {
            assignment[idx[pos]] = bag;
        }
        start = end;
    }
    build_bagging(&assignment, k)
}

/// Uniform random partition into n/k bags of exactly k.
pub fn random_bagging<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<Bagging, BagLearnError> {
    if k == 0 {
        return Err(BagLearnError::param("k must be at least 1"));
    }
    if n == 0 || !n.is_multiple_of(k) {
        return Err(BagLearnError::NotDivisible { n, divisor: k });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut assignment = vec![0usize; n];
    for (pos, &i) in perm.iter().enumerate() {
        assignment[i] = pos / k;
    }
    build_bagging(&assignment, k)
}

/// Visits every set partition of {0..n} as an assignment vector in restricted
/// growth form. Exponential; intended for oracle checks with small n.
fn for_each_partition(n: usize, f: &mut impl FnMut(&[usize])) {
    fn recurse(a: &mut Vec<usize>, used: usize, n: usize, f: &mut impl FnMut(&[usize])) {
        if a.len() == n {
            f(a);
            return;
        }
        for label in 0..=used {
            a.push(label);
            recurse(a, used.max(label + 1), n, f);
            a.pop();
        }
    }
    let mut a = Vec::with_capacity(n);
    recurse(&mut a, 0, n, f);
}

fn partition_objective(values: ArrayView1<f64>, assignment: &[usize]) -> f64 {
    let m = 1 + assignment.iter().copied().max().unwrap_or(0);
    let mut sums = vec![0.0f64; m];
    let mut counts = vec![0usize; m];
    for (i, &l) in assignment.iter().enumerate() {
        sums[l] += values[i];
        counts[l] += 1;
    }
    let mut obj = 0.0;
    for (i, &l) in assignment.iter().enumerate() {
        let mean = sums[l] / counts[l] as f64;
        obj += (values[i] - mean) * (values[i] - mean);
    }
    obj
}

const BRUTE_FORCE_LIMIT: usize = 12;

/// Minimum 1-d clustering objective over *all* set partitions with every
/// block of size ≥ k, by exhaustive enumeration. Reference oracle for the
/// dynamic program; n is capped at 12.
pub fn brute_force_min_size_objective(
    values: ArrayView1<f64>,
    k: usize,
) -> Result<f64, BagLearnError> {
    let n = values.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(BagLearnError::param(format!(
            "brute force enumeration capped at n = {BRUTE_FORCE_LIMIT}, got {n}"
        )));
    }
    if n < k {
        return Err(BagLearnError::TooFewPoints { n, k });
    }
    let mut best = f64::INFINITY;
    for_each_partition(n, &mut |a| {
        let m = 1 + a.iter().copied().max().unwrap();
        let mut counts = vec![0usize; m];
        for &l in a {
            counts[l] += 1;
        }
        if counts.iter().all(|&c| c >= k) {
            best = best.min(partition_objective(values, a));
        }
    });
    Ok(best)
}

/// Minimum objective over all partitions into blocks of exactly k.
pub fn brute_force_equal_size_objective(
    values: ArrayView1<f64>,
    k: usize,
) -> Result<f64, BagLearnError> {
    let n = values.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(BagLearnError::param(format!(
            "brute force enumeration capped at n = {BRUTE_FORCE_LIMIT}, got {n}"
        )));
    }
    if k == 0 || n == 0 || !n.is_multiple_of(k) {
        return Err(BagLearnError::NotDivisible { n, divisor: k });
    }
    let mut best = f64::INFINITY;
    for_each_partition(n, &mut |a| {
        let m = 1 + a.iter().copied().max().unwrap();
        let mut counts = vec![0usize; m];
        for &l in a {
            counts[l] += 1;
        }
        if counts.iter().all(|&c| c == k) {
            best = best.min(partition_objective(values, a));
        }
    });
    Ok(best)
}

/// A super-bag partition (all instances, groups of 2k) together with the
/// k-subset selected from each group. Only the selected halves carry bag
/// labels downstream; the rest of the data is deliberately unused.
#[derive(Debug, Clone)]
pub struct SuperbagDraw {
    /// Partition of all n instances into 2k-sized super-bags.
    pub super_bags: Bagging,
    /// For super-bag l, the k members chosen as the output bag (sorted,
    /// original instance indices).
    pub selected: Vec<Vec<usize>>,
}

impl SuperbagDraw {
    /// Output bags as a bagging over the selected instances, reindexed
    /// 0..n/2, plus the map from new index back to original instance.
    pub fn output_bagging(&self) -> Result<(Bagging, Vec<usize>), BagLearnError> {
        let mut picked: Vec<(usize, usize)> = Vec::new(); // (original, bag)
        for (l, sel) in self.selected.iter().enumerate() {
            for &i in sel {
                picked.push((i, l));
            }
        }
        picked.sort_unstable();
        let map: Vec<usize> = picked.iter().map(|&(i, _)| i).collect();
        let assignment: Vec<usize> = picked.iter().map(|&(_, l)| l).collect();
        let k = self.super_bags.min_size() / 2;
        let bagging = build_bagging(&assignment, k)?;
        Ok((bagging, map))
    }

    /// Instances not selected into any output bag, ascending.
    pub fn unused(&self) -> Vec<usize> {
        let n = self.super_bags.n();
        let mut used = vec![false; n];
        for sel in &self.selected {
            for &i in sel {
                used[i] = true;
            }
        }
        (0..n).filter(|&i| !used[i]).collect()
    }
}

fn select_subsets<R: Rng>(super_bags: &Bagging, k: usize, rng: &mut R) -> Vec<Vec<usize>> {
    super_bags
        .members()
        .iter()
        .map(|bag| {
            let picks = rand::seq::index::sample(rng, bag.len(), k);
            let mut sel: Vec<usize> = picks.iter().map(|p| bag[p]).collect();
            sel.sort_unstable();
            sel
        })
        .collect()
}

/// Random partition into 2k-sized super-bags, then one uniform k-subset from
/// each becomes an output bag. Half the instances end up unused.
pub fn superbag_random<R: Rng>(
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<SuperbagDraw, BagLearnError> {
    if k == 0 {
        return Err(BagLearnError::param("k must be at least 1"));
    }
    if n == 0 || !n.is_multiple_of(2 * k) {
        return Err(BagLearnError::NotDivisible { n, divisor: 2 * k });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut assignment = vec![0usize; n];
    for (pos, &i) in perm.iter().enumerate() {
        assignment[i] = pos / (2 * k);
    }
    let super_bags = build_bagging(&assignment, 2 * k)?;
    let selected = select_subsets(&super_bags, k, rng);
    Ok(SuperbagDraw {
        super_bags,
        selected,
    })
}

/// Sorts by value, cuts contiguous 2k-sized super-bags, then samples one
/// k-subset per super-bag.
pub fn superbag_sorted_agg_mir<R: Rng>(
    values: ArrayView1<f64>,
    k: usize,
    rng: &mut R,
) -> Result<SuperbagDraw, BagLearnError> {
    if k == 0 {
        return Err(BagLearnError::param("k must be at least 1"));
    }
    let n = values.len();
    if n == 0 || !n.is_multiple_of(2 * k) {
        return Err(BagLearnError::NotDivisible { n, divisor: 2 * k });
    }
    let idx = sorted_indices(values);
    let mut assignment = vec![0usize; n];
    for (pos, &i) in idx.iter().enumerate() {
        assignment[i] = pos / (2 * k);
    }
    let super_bags = build_bagging(&assignment, 2 * k)?;
    let selected = select_subsets(&super_bags, k, rng);
    Ok(SuperbagDraw {
        super_bags,
        selected,
    })
}

/// Balanced instance clustering.
///
/// Runs Lloyd's k-means with m = n/k centroids (farthest-point seeding, 50
/// iterations, 1e-8 relative objective tolerance), then enforces exact
/// size-k bags: a greedy margin-ordered capacity assignment followed by
/// local-swap refinement sweeps interleaved with recentering until the
/// partition is stable. In one dimension the refinement provably removes
/// every crossing pair, so the result matches the sort-and-chunk optimum.
pub fn instance_kmeans_balanced<R: Rng>(
    x: ArrayView2<f64>,
    k: usize,
    rng: &mut R,
) -> Result<Bagging, BagLearnError> {
    if k == 0 {
        return Err(BagLearnError::param("k must be at least 1"));
    }
    let n = x.nrows();
    if n == 0 || !n.is_multiple_of(k) {
        return Err(BagLearnError::NotDivisible { n, divisor: k });
    }
    if x.ncols() == 0 {
        return Err(BagLearnError::param("instances need at least one feature"));
    }
    let m = n / k;
    let xo = x.as_standard_layout();
    let xs = xo.as_slice().expect("standard layout");
    let d = x.ncols();
    let xn2: Vec<f64> = (0..n).map(|i| sq_norm(&xs[i * d..(i + 1) * d])).collect();
    let centroids = farthest_point_seeds(xs, n, d, &xn2, m, rng);
    let mut state = lloyd::Lloyd::new(xs, n, d, &xn2, centroids);
    state.run();
    let assignment = lloyd::balance(&mut state, k);
    build_bagging(&assignment, k)
}

/// Whitens the features by the inverse square root of `covariance`, then runs
/// [`instance_kmeans_balanced`] on the transformed data. Bag indices refer to
/// the original instances.
pub fn scaled_instance_kmeans<R: Rng>(
    x: ArrayView2<f64>,
    covariance: ArrayView2<f64>,
    k: usize,
    rng: &mut R,
) -> Result<Bagging, BagLearnError> {
    let d = x.ncols();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(BagLearnError::dim(format!(
            "covariance is {}x{} for d = {d}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let (vals, vecs) = linalg::sym_eigen(covariance);
    let min_eig = vals[0];
    let max_eig = vals[d - 1];
    if min_eig <= 1e-10 * max_eig {
        return Err(BagLearnError::SingularCovariance { min_eig });
    }
    let scaled = Array2::from_shape_fn((d, d), |(i, j)| vecs[[i, j]] / vals[j].sqrt());
    let whitener = scaled.dot(&vecs.t()); // V Λ^{-1/2} Vᵀ
    let xw = x.dot(&whitener);
    instance_kmeans_balanced(xw.view(), k, rng)
}

#[inline]
fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| (p - q) * (p - q))
        .sum::<f64>()
}

/// Squared distance with early exit once the partial sum reaches `cap`.
/// Callers only compare the result against `cap`, so returning any value
/// ≥ cap after the exit is sound.
#[inline]
fn sq_dist_capped(a: &[f64], b: &[f64], cap: f64) -> f64 {
    let mut acc = 0.0;
    let mut i = 0;
    let len = a.len();
    while i + 4 <= len {
        let d0 = a[i] - b[i];
        let d1 = a[i + 1] - b[i + 1];
        let d2 = a[i + 2] - b[i + 2];
        let d3 = a[i + 3] - b[i + 3];
        acc += d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3;
        if acc >= cap {
            return acc;
        }
        i += 4;
    }
    while i < len {
        let diff = a[i] - b[i];
        acc += diff * diff;
        i += 1;
    }
    acc
}

/// Heap entry for lazy farthest-point selection: pops largest distance
/// first, lowest point index on ties.
struct SeedEntry {
    d2: f64,
    idx: usize,
}

impl PartialEq for SeedEntry {
    fn eq(&self, other: &Self) -> bool {
        self.d2.total_cmp(&other.d2).is_eq() && self.idx == other.idx
    }
}
impl Eq for SeedEntry {}
impl PartialOrd for SeedEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SeedEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Greedy farthest-point seeding: first seed uniform from `rng`, each next
/// seed is the point farthest from the chosen set (lowest index on ties).
///
/// Selection is lazy: per-point distances to the seed set only shrink as
/// seeds are added, so a stale heap key is an upper bound. The heap top is
/// the true farthest point exactly when its key is current; stale tops are
/// refreshed against the seeds added since their last update and pushed
/// back. This picks the same sequence as a full argmax every round without
/// rescanning untouched points.
fn farthest_point_seeds<R: Rng>(
    xs: &[f64],
    n: usize,
    d: usize,
    xn2: &[f64],
    m: usize,
    rng: &mut R,
) -> Array2<f64> {
    let _ = xn2;
    let mut centroids = Array2::zeros((m, d));
    let mut seeds: Vec<usize> = Vec::with_capacity(m);
    let mut dist2 = vec![f64::INFINITY; n];
    // Number of seeds each point's dist2 already accounts for.
    let mut upto = vec![0usize; n];
    let mut heap: std::collections::BinaryHeap<SeedEntry> = (0..n)
        .map(|idx| SeedEntry {
            d2: f64::INFINITY,
            idx,
        })
        .collect();
    let mut cur = rng.random_range(0..n);
    for t in 0..m {
        centroids
            .row_mut(t)
            .assign(&ArrayView1::from(&xs[cur * d..(cur + 1) * d]));
        seeds.push(cur);
        if t + 1 == m {
            break;
        }
        cur = loop {
            let top = heap.pop().expect("heap holds every point");
            let i = top.idx;
            if upto[i] == seeds.len() {
                // dist2[i] counts itself when i is a seed, which is 0 and
                // can only resurface once every distance is 0; reselecting
                // then matches the eager argmax on identical points.
                heap.push(SeedEntry { d2: dist2[i], idx: i });
                break i;
            }
            let row = &xs[i * d..(i + 1) * d];
            for &s in &seeds[upto[i]..] {
                let cap = dist2[i];
                let dd = sq_dist_capped(row, &xs[s * d..(s + 1) * d], cap);
                if dd < cap {
                    dist2[i] = dd;
                }
            }
            upto[i] = seeds.len();
            heap.push(SeedEntry { d2: dist2[i], idx: i });
        };
    }
    centroids
}

mod lloyd {
    //! Lloyd iterations with Hamerly-style distance bounds.
    //!
    //! Per point we keep the (true, not squared) distance to its assigned
    //! centroid as an upper bound and a lower bound on the distance to every
    //! other centroid. A point whose upper bound does not exceed its lower
    //! bound cannot change assignment, so most points skip the all-centroid
    //! scan once the centroids settle. Bounds are loosened each iteration by
    //! the centroid movements, which keeps the pruning exact: the surviving
    //! assignments are identical to a full Lloyd sweep.

    use super::{sq_dist, sq_norm};
    use ndarray::linalg::general_mat_mul;
    use ndarray::{s, Array2};

    pub const MAX_ITERS: usize = 50;
    pub const REL_TOL: f64 = 1e-8;
    /// Stop once fewer than n/50 points move in an iteration: the capacity
    /// stage that follows reassigns far more points than that, so the long
    /// convergence tail only polishes detail the balancing then erases.
    const SETTLED_DIVISOR: usize = 50;
    const BLOCK: usize = 2048;

    pub struct Lloyd<'a> {
        xs: &'a [f64],
        n: usize,
        d: usize,
        m: usize,
        xn2: &'a [f64],
        total_xn2: f64,
        centroids: Array2<f64>,
        cn2: Vec<f64>,
        assign: Vec<usize>,
        upper: Vec<f64>,
        lower: Vec<f64>,
        counts: Vec<usize>,
        sums: Array2<f64>,
        fbuf: Array2<f64>,
        gbuf: Array2<f64>,
    }

    impl<'a> Lloyd<'a> {
        pub fn new(
            xs: &'a [f64],
            n: usize,
            d: usize,
            xn2: &'a [f64],
            centroids: Array2<f64>,
        ) -> Self {
            let m = centroids.nrows();
            let cn2 = (0..m)
                .map(|c| sq_norm(centroids.row(c).to_slice().expect("contiguous")))
                .collect();
            let block = BLOCK.min(n);
            Lloyd {
                xs,
                n,
                d,
                m,
                xn2,
                total_xn2: xn2.iter().sum(),
                centroids,
                cn2,
                assign: vec![usize::MAX; n],
                upper: vec![f64::INFINITY; n],
                lower: vec![0.0; n],
                counts: vec![0; m],
                sums: Array2::zeros((m, d)),
                fbuf: Array2::zeros((block, d)),
                gbuf: Array2::zeros((block, m)),
            }
        }

        pub fn run(&mut self) {
            let all: Vec<usize> = (0..self.n).collect();
            let mut force_full = true;
            let mut prev_obj = f64::INFINITY;
            for _ in 0..MAX_ITERS {
                let changed = if force_full {
                    self.scan(&all)
                } else {
                    self.scan_suspects()
                };
                force_full = false;
                let reseeded = self.recenter(&mut force_full);
                let obj = self.objective();
                if !reseeded {
                    if changed <= self.n / SETTLED_DIVISOR {
                        break;
                    }
                    if (prev_obj - obj).abs() <= REL_TOL * obj.abs().max(1e-300) {
                        break;
                    }
                }
                prev_obj = obj;
            }
        }

        /// Exact nearest/second-nearest scan for the given points; updates
        /// assignments, bounds, and the cluster sufficient statistics.
        /// Returns the number of points that changed cluster.
        fn scan(&mut self, idxs: &[usize]) -> usize {
            let mut changed = 0;
            let block = self.fbuf.nrows();
            let mut results: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(block);
            for chunk in idxs.chunks(block) {
                results.clear();
                for (r, &i) in chunk.iter().enumerate() {
                    self.fbuf
                        .row_mut(r)
                        .iter_mut()
                        .zip(&self.xs[i * self.d..(i + 1) * self.d])
                        .for_each(|(dst, &src)| *dst = src);
                }
                let b = chunk.len();
                {
                    let f = self.fbuf.slice(s![..b, ..]);
                    let mut g = self.gbuf.slice_mut(s![..b, ..]);
                    general_mat_mul(1.0, &f, &self.centroids.t(), 0.0, &mut g);
                    for (r, &i) in chunk.iter().enumerate() {
                        let row = g.row(r);
                        let row = row.to_slice().expect("contiguous");
                        let base = self.xn2[i];
                        let mut c1 = 0usize;
                        let mut d1 = f64::INFINITY;
                        let mut d2 = f64::INFINITY;
                        for (c, &gc) in row.iter().enumerate() {
                            let dist = (base - 2.0 * gc + self.cn2[c]).max(0.0);
                            if dist < d1 {
                                d2 = d1;
                                d1 = dist;
                                c1 = c;
                            } else if dist < d2 {
                                d2 = dist;
                            }
                        }
                        results.push((i, c1, d1, d2));
                    }
                }
                for &(i, c1, d1, d2) in &results {
                    let old = self.assign[i];
                    if old != c1 {
                        self.move_point(i, old, c1);
                        changed += 1;
                    }
                    self.upper[i] = d1.sqrt();
                    self.lower[i] = if self.m > 1 { d2.sqrt() } else { f64::INFINITY };
                }
            }
            changed
        }

        /// Bound-guided partial sweep: tighten upper bounds for suspects and
        /// rescan only points whose bounds still overlap.
        fn scan_suspects(&mut self) -> usize {
            let mut survivors = Vec::new();
            for i in 0..self.n {
                if self.upper[i] > self.lower[i] {
                    let a = self.assign[i];
                    let crow = self.centroids.row(a);
                    let exact = sq_dist(
                        &self.xs[i * self.d..(i + 1) * self.d],
                        crow.to_slice().expect("contiguous"),
                    )
                    .sqrt();
                    self.upper[i] = exact;
                    if exact > self.lower[i] {
                        survivors.push(i);
                    }
                }
            }
            if survivors.is_empty() {
                0
            } else {
                self.scan(&survivors)
            }
        }

        fn move_point(&mut self, i: usize, old: usize, new: usize) {
            let row = &self.xs[i * self.d..(i + 1) * self.d];
            if old != usize::MAX {
                self.counts[old] -= 1;
                self.sums
                    .row_mut(old)
                    .iter_mut()
                    .zip(row)
                    .for_each(|(dst, &src)| *dst -= src);
            }
            self.counts[new] += 1;
            self.sums
                .row_mut(new)
                .iter_mut()
                .zip(row)
                .for_each(|(dst, &src)| *dst += src);
            self.assign[i] = new;
        }

        /// Moves centroids to their cluster means, re-seats empty clusters,
        /// and loosens the distance bounds by the centroid movements.
        fn recenter(&mut self, force_full: &mut bool) -> bool {
            let mut reseeded = false;
            for c in 0..self.m {
                if self.counts[c] == 0 {
                    // Re-seat at the point farthest from its current
                    // centroid, excluding points that would empty their own
                    // cluster; ties resolve to the lowest index.
                    let mut pick = usize::MAX;
                    let mut pick_d = f64::NEG_INFINITY;
                    for i in 0..self.n {
                        if self.counts[self.assign[i]] > 1 && self.upper[i] > pick_d {
                            pick_d = self.upper[i];
                            pick = i;
                        }
                    }
                    if pick != usize::MAX {
                        let old = self.assign[pick];
                        self.move_point(pick, old, c);
                        reseeded = true;
                    }
                }
            }
            if reseeded {
                *force_full = true;
            }
            let mut max_move = 0.0f64;
            let mut moves = vec![0.0f64; self.m];
            for (c, move_slot) in moves.iter_mut().enumerate() {
                if self.counts[c] == 0 {
                    continue; // unreachable after re-seating unless m > n
                }
                let inv = 1.0 / self.counts[c] as f64;
                let mut move2 = 0.0;
                let mut norm2 = 0.0;
                let mut crow = self.centroids.row_mut(c);
                let srow = self.sums.row(c);
                for (dst, &s) in crow.iter_mut().zip(srow.iter()) {
                    let nv = s * inv;
                    let diff = nv - *dst;
                    move2 += diff * diff;
                    norm2 += nv * nv;
                    *dst = nv;
                }
                self.cn2[c] = norm2;
                *move_slot = move2.sqrt();
                max_move = max_move.max(*move_slot);
            }
            if !*force_full && max_move > 0.0 {
                for i in 0..self.n {
                    self.upper[i] += moves[self.assign[i]];
                    self.lower[i] -= max_move;
                }
            }
            reseeded
        }

        /// Current objective via the cluster sufficient statistics:
        /// Σ‖x‖² − Σ_c ‖sum_c‖²/|c|.
        fn objective(&self) -> f64 {
            let mut reduction = 0.0;
            for c in 0..self.m {
                if self.counts[c] > 0 {
                    let srow = self.sums.row(c);
                    reduction += sq_norm(srow.to_slice().expect("contiguous"))
                        / self.counts[c] as f64;
                }
            }
            self.total_xn2 - reduction
        }

        /// Squared distance from point `i` to centroid `c`.
        fn point_dist2(&self, i: usize, c: usize) -> f64 {
            sq_dist(
                &self.xs[i * self.d..(i + 1) * self.d],
                self.centroids.row(c).to_slice().expect("contiguous"),
            )
        }

        /// The `f` nearest centroids for each listed point, ascending by
        /// distance (ties keep the lower centroid index). Results land in
        /// the flat n×f buffers `pref` (centroid ids) and `prefd` (squared
        /// distances) at each point's own offset.
        fn top_candidates(&mut self, idxs: &[usize], f: usize, pref: &mut [u32], prefd: &mut [f64]) {
            debug_assert_eq!(pref.len(), self.n * f);
            debug_assert_eq!(prefd.len(), self.n * f);
            let block = self.fbuf.nrows();
            for chunk in idxs.chunks(block) {
                for (r, &i) in chunk.iter().enumerate() {
                    self.fbuf
                        .row_mut(r)
                        .iter_mut()
                        .zip(&self.xs[i * self.d..(i + 1) * self.d])
                        .for_each(|(dst, &src)| *dst = src);
                }
                let b = chunk.len();
                let fb = self.fbuf.slice(s![..b, ..]);
                let mut g = self.gbuf.slice_mut(s![..b, ..]);
                general_mat_mul(1.0, &fb, &self.centroids.t(), 0.0, &mut g);
                for (r, &i) in chunk.iter().enumerate() {
                    let row = g.row(r);
                    let row = row.to_slice().expect("contiguous");
                    let base = self.xn2[i];
                    let pd = &mut prefd[i * f..(i + 1) * f];
                    let pi = &mut pref[i * f..(i + 1) * f];
                    pd.fill(f64::INFINITY);
                    for (c, &gc) in row.iter().enumerate() {
                        let dist = (base - 2.0 * gc + self.cn2[c]).max(0.0);
                        if dist < pd[f - 1] {
                            let mut pos = f - 1;
                            while pos > 0 && dist < pd[pos - 1] {
                                pd[pos] = pd[pos - 1];
                                pi[pos] = pi[pos - 1];
                                pos -= 1;
                            }
                            pd[pos] = dist;
                            pi[pos] = c as u32;
                        }
                    }
                }
            }
        }

        /// Moves centroids to the means of the given member lists; records
        /// each centroid's displacement in `moves` and returns the largest.
        fn recenter_from(&mut self, members: &[Vec<usize>], moves: &mut [f64]) -> f64 {
            let mut max_move = 0.0f64;
            for (c, bag) in members.iter().enumerate() {
                moves[c] = 0.0;
                if bag.is_empty() {
                    continue;
                }
                let inv = 1.0 / bag.len() as f64;
                let mut mean = vec![0.0f64; self.d];
                for &i in bag {
                    for (dst, &v) in mean.iter_mut().zip(&self.xs[i * self.d..(i + 1) * self.d])
                    {
                        *dst += v;
                    }
                }
                let mut move2 = 0.0;
                let mut norm2 = 0.0;
                let mut crow = self.centroids.row_mut(c);
                for (dst, &s) in crow.iter_mut().zip(mean.iter()) {
                    let nv = s * inv;
                    let diff = nv - *dst;
                    move2 += diff * diff;
                    norm2 += nv * nv;
                    *dst = nv;
                }
                self.cn2[c] = norm2;
                moves[c] = move2.sqrt();
                max_move = max_move.max(moves[c]);
            }
            max_move
        }
    }

    const CANDIDATES: usize = 8;
    const OUTER_CAP: usize = 16;
    const SWEEP_CAP: usize = 50;

    /// Exact size-k bags from a converged Lloyd state.
    ///
    /// Greedy margin-ordered capacity assignment seeds the partition, then
    /// alternating phases of local swap sweeps and recentering refine it. A
    /// swap trades two points between bags when the exchange strictly lowers
    /// the summed squared centroid distances; sweeps repeat until one makes
    /// no swap, recentering follows, and the loop ends once a sweep against
    /// freshly scanned distances is already clean. In one dimension a clean
    /// sweep implies no crossing pairs, which forces the contiguous
    /// (optimal) partition.
    ///
    /// Only the first round scans every centroid. Later rounds recompute
    /// exact distances to each point's cached candidates (cheap) and rescan
    /// a point in full only when the accumulated centroid drift since its
    /// last scan could let an uncached centroid undercut its cached best:
    /// uncached centroids sat at distance ≥ `margin` then and have moved at
    /// most `drift` since, so `margin - drift` still below the cached best
    /// keeps the cached set trustworthy.
    pub fn balance(st: &mut Lloyd, k: usize) -> Vec<usize> {
        let n = st.n;
        let m = st.m;
        if m == 1 {
            return vec![0; n];
        }
        let f = CANDIDATES.min(m);
        let mut pref = vec![0u32; n * f];
        let mut prefd = vec![f64::INFINITY; n * f];
        let mut cur: Vec<usize> = vec![usize::MAX; n];
        let mut members: Vec<Vec<usize>> = vec![Vec::with_capacity(k); m];
        let mut dcur = vec![0.0f64; n];
        // Lower bound on each point's distance to every centroid outside
        // its cached set, taken at the point's last scan, plus the total
        // centroid drift then and the outer round it happened in. Bounds
        // are in plain (not squared) distance so the triangle inequality
        // applies directly.
        let mut margin = vec![0.0f64; n];
        let mut scan_drift = vec![0.0f64; n];
        let mut epoch = vec![0usize; n];
        let mut drift = 0.0f64;
        // cum_moves[t][c]: movement of centroid c summed over the recenters
        // of outers 0..t, so row `outer` is the baseline for scans made
        // during that outer.
        let mut cum_moves: Vec<Vec<f64>> = vec![vec![0.0; m]];
        let mut moves = vec![0.0f64; m];
        let all: Vec<usize> = (0..n).collect();
        for outer in 0..OUTER_CAP {
            if outer == 0 {
                st.top_candidates(&all, f, &mut pref, &mut prefd);
                for i in 0..n {
                    margin[i] = prefd[i * f + f - 1].sqrt();
                }
                greedy_capacity(st, k, f, &pref, &prefd, &mut cur);
                for (i, &c) in cur.iter().enumerate() {
                    members[c].push(i);
                }
            } else {
                // Per scan epoch, centroid movement since then, sorted
                // descending, so a stale point visits exactly the centroids
                // over its own threshold and nothing else.
                let now = cum_moves.last().expect("row pushed per outer").clone();
                let movers: Vec<Vec<(f64, u32)>> = cum_moves[..outer]
                    .iter()
                    .map(|base| {
                        let mut v: Vec<(f64, u32)> = now
                            .iter()
                            .zip(base)
                            .map(|(a, b)| a - b)
                            .zip(0..m as u32)
                            .collect();
                        v.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
                        v
                    })
                    .collect();
                let probe_cap = (m / 8).max(2 * f);
                let mut bulk: Vec<usize> = Vec::new();
                for i in 0..n {
                    let mut best = f64::INFINITY;
                    for t in 0..f {
                        let dd = st.point_dist2(i, pref[i * f + t] as usize);
                        prefd[i * f + t] = dd;
                        best = best.min(dd);
                    }
                    let b = best.sqrt();
                    if margin[i] - (drift - scan_drift[i]) >= b {
                        continue;
                    }
                    // Uncached centroids sat at distance >= margin when this
                    // point last scanned, so only those that moved more than
                    // margin - b since then can undercut the cached best.
                    // Probe exactly those and fold them into the cache; a
                    // point with too many movers over its threshold rescans
                    // in bulk instead, which is cheaper per centroid.
                    let thr = margin[i] - b;
                    let moved = &movers[epoch[i]];
                    let cut = moved.partition_point(|&(delta, _)| delta > thr);
                    if cut > probe_cap {
                        bulk.push(i);
                        continue;
                    }
                    let pd = &mut prefd[i * f..(i + 1) * f];
                    let pi = &mut pref[i * f..(i + 1) * f];
                    let mut pairs: [(f64, u32); CANDIDATES] = [(f64::INFINITY, 0); CANDIDATES];
                    for t in 0..f {
                        pairs[t] = (pd[t], pi[t]);
                    }
                    pairs[..f].sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                    for (t, &(dd, c)) in pairs[..f].iter().enumerate() {
                        pd[t] = dd;
                        pi[t] = c;
                    }
                    for &(_, c32) in &moved[..cut] {
                        if pi.contains(&c32) {
                            continue;
                        }
                        let dd = st.point_dist2(i, c32 as usize);
                        if dd < pd[f - 1] {
                            let mut pos = f - 1;
                            while pos > 0 && dd < pd[pos - 1] {
                                pd[pos] = pd[pos - 1];
                                pi[pos] = pi[pos - 1];
                                pos -= 1;
                            }
                            pd[pos] = dd;
                            pi[pos] = c32;
                        }
                    }
                    // Centroids that stayed uncached either never crossed
                    // the probe threshold (distance still >= b) or lost an
                    // exact comparison against the new f-th slot.
                    margin[i] = b.min(pd[f - 1].sqrt());
                    scan_drift[i] = drift;
                    epoch[i] = outer;
                }
                if !bulk.is_empty() {
                    st.top_candidates(&bulk, f, &mut pref, &mut prefd);
                    for &i in &bulk {
                        margin[i] = prefd[i * f + f - 1].sqrt();
                        scan_drift[i] = drift;
                        epoch[i] = outer;
                    }
                }
            }
            for i in 0..n {
                let cached = pref[i * f..(i + 1) * f]
                    .iter()
                    .position(|&c| c as usize == cur[i]);
                dcur[i] = match cached {
                    Some(t) => prefd[i * f + t],
                    None => st.point_dist2(i, cur[i]),
                };
            }
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                let mut nswaps = 0usize;
                for i in 0..n {
                    let a = cur[i];
                    for t in 0..f {
                        let b = pref[i * f + t] as usize;
                        if b == a {
                            continue;
                        }
                        let gain = dcur[i] - prefd[i * f + t];
                        if gain <= 0.0 {
                            continue;
                        }
                        // Partner in b losing the least by moving to a; the
                        // swap happens only if the pair strictly improves.
                        let mut best_j = usize::MAX;
                        let mut best_loss = f64::INFINITY;
                        let mut best_dja = 0.0;
                        for &j in &members[b] {
                            let dja = st.point_dist2(j, a);
                            let loss = dja - dcur[j];
                            if loss < best_loss {
                                best_loss = loss;
                                best_j = j;
                                best_dja = dja;
                            }
                        }
                        if best_j != usize::MAX && gain > best_loss {
                            let j = best_j;
                            let pos_i = members[a].iter().position(|&p| p == i).unwrap();
                            members[a].remove(pos_i);
                            let pos_j = members[b].iter().position(|&p| p == j).unwrap();
                            members[b].remove(pos_j);
                            members[b].push(i);
                            members[a].push(j);
                            cur[i] = b;
                            cur[j] = a;
                            dcur[i] = prefd[i * f + t];
                            dcur[j] = best_dja;
                            nswaps += 1;
                            break;
                        }
                    }
                }
                if nswaps == 0 || sweeps >= SWEEP_CAP {
                    break;
                }
            }
            let max_move = st.recenter_from(&members, &mut moves);
            drift += max_move;
            let last = cum_moves.last().expect("seeded with a zero row");
            let next: Vec<f64> = last.iter().zip(&moves).map(|(a, b)| a + b).collect();
            cum_moves.push(next);
            // A clean first sweep against fresh distances plus unmoved
            // centroids is a confirmed fixed point.
            if sweeps == 1 && max_move <= 1e-12 {
                break;
            }
        }
        cur
    }

    /// Margin-ordered greedy: points sorted by how much their nearest
    /// centroid beats the runner-up (descending, ties by index) each take
    /// the nearest centroid with remaining capacity.
    fn greedy_capacity(
        st: &Lloyd,
        k: usize,
        f: usize,
        pref: &[u32],
        prefd: &[f64],
        cur: &mut [usize],
    ) {
        let n = st.n;
        let m = st.m;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let ma = prefd[a * f + 1].sqrt() - prefd[a * f].sqrt();
            let mb = prefd[b * f + 1].sqrt() - prefd[b * f].sqrt();
            mb.total_cmp(&ma).then(a.cmp(&b))
        });
        let mut caps = vec![k; m];
        let mut open: Vec<usize> = (0..m).collect();
        for &i in &order {
            let mut target = usize::MAX;
            for t in 0..f {
                let c = pref[i * f + t] as usize;
                if caps[c] > 0 {
                    target = c;
                    break;
                }
            }
            if target == usize::MAX {
                // All cached candidates are full: nearest open centroid,
                // lowest index on ties.
                open.retain(|&c| caps[c] > 0);
                let mut best_d = f64::INFINITY;
                for &c in &open {
                    let dist = st.point_dist2(i, c);
                    if dist < best_d {
                        best_d = dist;
                        target = c;
                    }
                }
            }
            caps[target] -= 1;
            cur[i] = target;
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::bag::{kmeans_objective_1d, kmeans_objective_multi};
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use rand_distr::StandardNormal;

    #[test]
    fn equal_partitioner_matches_hand_example() {
        let values = array![5.0, 1.0, 4.0, 2.0, 3.0, 6.0];
        let b = label_kmeans_equal(values.view(), 2).unwrap();
        // Value groups {1,2},{3,4},{5,6} are indices {1,3},{4,2},{0,5}.
        assert_eq!(b.members(), &[vec![0, 5], vec![1, 3], vec![2, 4]]);
        let obj = kmeans_objective_1d(values.view(), &b);
        assert_abs_diff_eq!(obj, 1.5, epsilon = 1e-12);
        let oracle = brute_force_equal_size_objective(values.view(), 2).unwrap();
        assert_abs_diff_eq!(obj, oracle, epsilon = 1e-12);
    }

    #[test]
    fn equal_partitioner_trivial_cases() {
        let constant = Array1::from_elem(6, 3.25);
        let b = label_kmeans_equal(constant.view(), 3).unwrap();
        assert_eq!(kmeans_objective_1d(constant.view(), &b), 0.0);

        let values = array![1.0, 2.0, 3.0, 4.0];
        let single = label_kmeans_equal(values.view(), 4).unwrap();
        assert_eq!(single.m(), 1);

        assert!(matches!(
            label_kmeans_equal(values.view(), 3),
            Err(BagLearnError::NotDivisible { n: 4, divisor: 3 })
        ));
    }

    #[test]
    fn minsize_splits_at_the_gap() {
        let values = array![0.0, 0.0, 0.0, 10.0, 10.0];
        let b = label_kmeans_minsize(values.view(), 2).unwrap();
        let mut sizes = b.sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 3]);
        assert_eq!(kmeans_objective_1d(values.view(), &b), 0.0);
    }

    #[test]
    fn minsize_forces_single_bag_when_small() {
        let values = array![9.0, 1.0, 5.0];
        let b = label_kmeans_minsize(values.view(), 2).unwrap();
        assert_eq!(b.m(), 1);
        assert!(matches!(
            label_kmeans_minsize(array![1.0].view(), 2),
            Err(BagLearnError::TooFewPoints { n: 1, k: 2 })
        ));
    }

    #[test]
    fn minsize_matches_exhaustive_minimum() {
        let mut rng = rng_from_seed(31);
        for _ in 0..25 {
            let n = 7;
            let values =
                Array1::from_shape_simple_fn(n, || rng.sample::<f64, _>(StandardNormal));
            let b = label_kmeans_minsize(values.view(), 2).unwrap();
            let got = kmeans_objective_1d(values.view(), &b);
            let best = brute_force_min_size_objective(values.view(), 2).unwrap();
            assert!(
                (got - best).abs() <= 1e-9,
                "DP {got} vs brute force {best} on {values:?}"
            );
        }
    }

    #[test]
    fn random_bagging_edge_sizes() {
        let mut rng = rng_from_seed(5);
        let single = random_bagging(6, 6, &mut rng).unwrap();
        assert_eq!(single.m(), 1);
        let unit = random_bagging(5, 1, &mut rng).unwrap();
        assert_eq!(unit.m(), 5);
        assert!(random_bagging(5, 2, &mut rng).is_err());
    }

    #[test]
    fn random_bagging_is_uniform_over_pairings() {
        // n=4, k=2 has 3 distinct pairings; each should appear ~1/3.
        let mut rng = rng_from_seed(8);
        let draws = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            let b = random_bagging(4, 2, &mut rng).unwrap();
            // Identify the pairing by instance 0's partner.
            let partner = b.members()[0][1];
            counts[partner - 1] += 1;
        }
        let se = (2.0 / 9.0 / draws as f64).sqrt();
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!(
                (freq - 1.0 / 3.0).abs() < 4.0 * se,
                "pairing frequency {freq}"
            );
        }
    }

    #[test]
    fn superbag_single_group() {
        let mut rng = rng_from_seed(2);
        let draw = superbag_random(4, 2, &mut rng).unwrap();
        assert_eq!(draw.super_bags.m(), 1);
        assert_eq!(draw.selected.len(), 1);
        assert_eq!(draw.selected[0].len(), 2);
        let (bagging, map) = draw.output_bagging().unwrap();
        assert_eq!(bagging.m(), 1);
        assert_eq!(map.len(), 2);
        assert_eq!(draw.unused().len(), 2);
    }

    #[test]
    fn superbag_marginal_is_one_half() {
        let mut rng = rng_from_seed(13);
        let draws = 10_000;
        let mut hits = 0;
        for _ in 0..draws {
            let draw = superbag_random(8, 2, &mut rng).unwrap();
            if draw.selected.iter().any(|sel| sel.contains(&0)) {
                hits += 1;
            }
        }
        let freq = hits as f64 / draws as f64;
        let se = (0.25 / draws as f64).sqrt();
        assert!((freq - 0.5).abs() < 4.0 * se, "marginal {freq}");
    }

    #[test]
    fn superbag_pair_cooccurrence_matches_theory() {
        // Conditional on instance 0 being selected, a same-super-bag partner
        // joins with probability (k−1)/(2k−1) = 2/5 at k=3.
        let mut rng = rng_from_seed(17);
        let draws = 10_000;
        let mut joint = 0usize;
        let mut base = 0usize;
        for _ in 0..draws {
            let draw = superbag_random(6, 3, &mut rng).unwrap();
            let sel = &draw.selected[0];
            if sel.contains(&0) {
                base += 1;
                if sel.contains(&1) {
                    joint += 1;
                }
            }
        }
        let freq = joint as f64 / base as f64;
        let p = 2.0 / 5.0;
        let se = (p * (1.0 - p) / base as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * se, "co-occurrence {freq}");
    }

    #[test]
    fn sorted_superbags_split_low_and_high() {
        let mut rng = rng_from_seed(3);
        let values = array![4.0, 1.0, 3.0, 2.0];
        let draw = superbag_sorted_agg_mir(values.view(), 1, &mut rng).unwrap();
        // Lowest two values {1.0, 2.0} are indices {1,3}; highest are {0,2}.
        assert_eq!(draw.super_bags.members(), &[vec![0, 2], vec![1, 3]]);
        for sel in &draw.selected {
            assert_eq!(sel.len(), 1);
        }
    }

    #[test]
    fn sorted_superbag_output_range_within_group_range() {
        let mut rng = rng_from_seed(23);
        for trial in 0..1_000 {
            let n = 12;
            let values =
                Array1::from_shape_simple_fn(n, || rng.sample::<f64, _>(StandardNormal));
            let draw = superbag_sorted_agg_mir(values.view(), 2, &mut rng).unwrap();
            for (l, sel) in draw.selected.iter().enumerate() {
                let group = &draw.super_bags.members()[l];
                let lo = group
                    .iter()
                    .map(|&i| values[i])
                    .fold(f64::INFINITY, f64::min);
                let hi = group
                    .iter()
                    .map(|&i| values[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                for &i in sel {
                    assert!(
                        values[i] >= lo && values[i] <= hi,
                        "trial {trial} bag {l}: {} outside [{lo}, {hi}]",
                        values[i]
                    );
                }
            }
        }
    }

    #[test]
    fn balanced_kmeans_pairs_nearest_corners() {
        let x = array![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]];
        let mut rng = rng_from_seed(11);
        let b = instance_kmeans_balanced(x.view(), 2, &mut rng).unwrap();
        let obj = kmeans_objective_multi(x.view(), &b);
        // Edge pairings cost 4, the diagonal pairing costs 8; the mean over
        // the 3 random pairings is 16/3.
        assert_abs_diff_eq!(obj, 4.0, epsilon = 1e-12);
        assert!(obj <= 16.0 / 3.0);
    }

    #[test]
    fn balanced_kmeans_handles_identical_points() {
        let x = Array2::from_elem((8, 3), 1.0);
        let mut rng = rng_from_seed(4);
        let b = instance_kmeans_balanced(x.view(), 2, &mut rng).unwrap();
        assert_eq!(b.m(), 4);
        assert_eq!(b.uniform_size(), Some(2));
        assert_eq!(kmeans_objective_multi(x.view(), &b), 0.0);
    }

    #[test]
    fn balanced_kmeans_tracks_exact_1d_solution() {
        let mut rng = rng_from_seed(41);
        let n = 1_000;
        let values: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let x = Array2::from_shape_vec((n, 1), values.clone()).unwrap();
        let v = Array1::from_vec(values);
        let b = instance_kmeans_balanced(x.view(), 10, &mut rng).unwrap();
        let approx_obj = kmeans_objective_1d(v.view(), &b);
        let exact = label_kmeans_equal(v.view(), 10).unwrap();
        let exact_obj = kmeans_objective_1d(v.view(), &exact);
        assert!(
            approx_obj <= 1.05 * exact_obj,
            "balanced k-means {approx_obj} vs exact 1d {exact_obj}"
        );
    }

    #[test]
    fn identity_covariance_leaves_clustering_unchanged() {
        let mut rng_raw = rng_from_seed(19);
        let x = Array2::from_shape_simple_fn((24, 3), || {
            rng_raw.sample::<f64, _>(StandardNormal)
        });
        let eye = Array2::eye(3);
        let mut r1 = rng_from_seed(77);
        let mut r2 = rng_from_seed(77);
        let plain = instance_kmeans_balanced(x.view(), 4, &mut r1).unwrap();
        let scaled = scaled_instance_kmeans(x.view(), eye.view(), 4, &mut r2).unwrap();
        assert_eq!(plain, scaled);
    }

    #[test]
    fn whitening_prefers_the_low_variance_axis() {
        // Two clusters separated by 3 on the unit-variance axis, scattered
        // over ±15 on the variance-100 axis. Unscaled k-means groups by the
        // dominant axis; whitening flips that.
        let x = array![
            [-15.0, 0.0],
            [-5.0, 0.0],
            [5.0, 0.0],
            [15.0, 0.0],
            [-15.0, 3.0],
            [-5.0, 3.0],
            [5.0, 3.0],
            [15.0, 3.0]
        ];
        let cov = array![[100.0, 0.0], [0.0, 1.0]];
        let whitened = {
            let mut xw = x.clone();
            xw.column_mut(0).mapv_inplace(|v| v / 10.0);
            xw
        };
        let mut r1 = rng_from_seed(6);
        let mut r2 = rng_from_seed(6);
        let plain = instance_kmeans_balanced(x.view(), 4, &mut r1).unwrap();
        let scaled = scaled_instance_kmeans(x.view(), cov.view(), 4, &mut r2).unwrap();
        let plain_w = kmeans_objective_multi(whitened.view(), &plain);
        let scaled_w = kmeans_objective_multi(whitened.view(), &scaled);
        assert!(
            scaled_w < plain_w,
            "whitened objective {scaled_w} should beat unscaled {plain_w}"
        );
    }

    #[test]
    fn whitened_features_have_identity_covariance() {
        use crate::synth::{gen_features, DataFamily, DataSpec};
        let spec = DataSpec {
            n: 10_000,
            d: 3,
            family: DataFamily::NonIsotropicCorrelated,
            sigma: 0.0,
            seed: 27,
        };
        let mut rng = rng_from_seed(spec.seed);
        let (x, cov) = gen_features(&spec, &mut rng).unwrap();
        let (vals, vecs) = linalg::sym_eigen(cov.view());
        let scaled = Array2::from_shape_fn((3, 3), |(i, j)| vecs[[i, j]] / vals[j].sqrt());
        let whitener = scaled.dot(&vecs.t());
        let xw = x.dot(&whitener);
        let sample = xw.t().dot(&xw) / xw.nrows() as f64;
        let diff = &sample - &Array2::<f64>::eye(3);
        assert!(linalg::op_norm(diff.view()) < 0.1);
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let x = Array2::<f64>::zeros((4, 2));
        let cov = array![[1.0, 1.0], [1.0, 1.0]]; // rank 1
        let mut rng = rng_from_seed(1);
        assert!(matches!(
            scaled_instance_kmeans(x.view(), cov.view(), 2, &mut rng),
            Err(BagLearnError::SingularCovariance { .. })
        ));
    }

    #[test]
    fn strategies_produce_valid_partitions() {
        let mut rng = rng_from_seed(55);
        let values = Array1::from_shape_simple_fn(24, || rng.sample::<f64, _>(StandardNormal));
        let x = Array2::from_shape_simple_fn((24, 2), || rng.sample::<f64, _>(StandardNormal));
        let all: Vec<Bagging> = vec![
            label_kmeans_equal(values.view(), 4).unwrap(),
            label_kmeans_minsize(values.view(), 4).unwrap(),
            random_bagging(24, 4, &mut rng).unwrap(),
            instance_kmeans_balanced(x.view(), 4, &mut rng).unwrap(),
        ];
        for b in &all {
            assert_eq!(b.sizes().iter().sum::<usize>(), 24);
            assert!(b.sizes().iter().all(|&s| s >= 4));
        }
    }
}
