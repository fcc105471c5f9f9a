//! Convex-geometry layer: row normalization onto the simplex, identification
//! of the extreme points of the data cloud, k-means pruning to a candidate
//! set, and selection of the K-vertex sub-polytope of maximum volume (with
//! the greedy XRAY alternative).
//!
//! Extremality is certified per point: either by a phase-1 LP showing the
//! point cannot be written as a convex combination of the others, or (for
//! large clouds) by exhibiting a linear functional the point uniquely
//! maximizes over a fixed direction bank. Near-duplicate locations are
//! grouped first — repeated pure rows would otherwise defeat both
//! certificates by "expressing" each twin through the other.

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::PollutantMatrix;
use crate::numeric::kmeans::kmeans;
use crate::numeric::nnls::nnls_gram;
use crate::numeric::simplex_lp::convex_infeasibility;

/// Default LP extremality tolerance.
pub const DEFAULT_LP_TOL: f64 = 1e-8;
/// Points within this L-infinity distance are treated as one location.
pub const DEDUP_TOL: f64 = 1e-9;
/// Exhaustive subset search is used when C(N0, K) stays within this budget.
pub const EXHAUSTIVE_BUDGET: u128 = 2_000_000;
/// Default number of random directions in the screening bank.
pub const DEFAULT_RANDOM_DIRECTIONS: usize = 256;
/// Pruning keeps N0 = N0_MULTIPLIER * K candidates.
pub const N0_MULTIPLIER: usize = 40;

/// Row-normalized data cloud on the (J-1)-simplex.
#[derive(Debug, Clone)]
pub struct SimplexCloud {
    /// Retained rows, each summing to one.
    pub points: Array2<f64>,
    /// Normalization factor per retained row.
    pub row_sums: Vec<f64>,
    /// Original indices of all-zero rows that were excluded.
    pub dropped_zero_rows: Vec<usize>,
}

/// How extreme points are identified.
#[derive(Debug, Clone)]
pub enum ExtremeMethod {
    /// Per-point phase-1 LP certificates; exact but O(n) LP solves.
    ExactLp,
    /// Direction-bank screen: coordinate axes, pairwise coordinate
    /// differences, and seeded random unit directions. Every returned point
    /// uniquely maximizes some direction, so it is certifiably extreme;
    /// completeness is approximate and grows with `random_directions`.
    Screen { random_directions: usize, seed: u64 },
}

/// Indices (into [`SimplexCloud::points`]) of identified hull vertices and
/// the pruned candidate subset.
#[derive(Debug, Clone)]
pub struct VertexSet {
    pub indices: Vec<usize>,
    pub candidate_indices: Vec<usize>,
}

/// Row-stochastic profile matrix `H*` (K x J), plus the cloud rows the
/// profiles were taken from (empty when profiles do not come from a cloud).
#[derive(Debug, Clone)]
pub struct ProfileMatrix {
    pub h_star: Array2<f64>,
    pub cloud_rows: Vec<usize>,
}

impl ProfileMatrix {
    /// Validate and renormalize: entries non-negative, rows summing to one,
    /// rows affinely independent (positive polytope volume).
    pub fn new(mut h_star: Array2<f64>, cloud_rows: Vec<usize>) -> Result<Self> {
        for mut row in h_star.rows_mut() {
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) || row.iter().any(|v| *v < -1e-12) {
                return Err(Error::Geometry(
                    "profile row must be non-negative with positive sum".into(),
                ));
            }
            row.mapv_inplace(|v| (v / sum).max(0.0));
        }
        if polytope_volume(h_star.view()) <= 0.0 {
            return Err(Error::Geometry("profile rows affinely dependent".into()));
        }
        Ok(ProfileMatrix { h_star, cloud_rows })
    }

    pub fn k(&self) -> usize {
        self.h_star.nrows()
    }
}

/// Divide each row by its sum; all-zero rows are recorded and excluded.
pub fn normalize_rows(matrix: &PollutantMatrix) -> Result<SimplexCloud> {
    normalize_rows_array(matrix.values.view())
}

/// [`normalize_rows`] on a bare non-negative array.
pub fn normalize_rows_array(values: ArrayView2<f64>) -> Result<SimplexCloud> {
    if values.iter().any(|v| *v < 0.0) {
        return Err(Error::Invalid("matrix must be non-negative".into()));
    }
    let mut kept = Vec::new();
    let mut row_sums = Vec::new();
    let mut dropped = Vec::new();
    for (i, row) in values.rows().into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            kept.push(i);
            row_sums.push(sum);
        } else {
            dropped.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::Geometry("all rows are zero".into()));
    }
    let j = values.ncols();
    let mut points = Array2::zeros((kept.len(), j));
    for (out, &i) in kept.iter().enumerate() {
        let sum = row_sums[out];
        for c in 0..j {
            points[[out, c]] = values[[i, c]] / sum;
        }
    }
    Ok(SimplexCloud {
        points,
        row_sums,
        dropped_zero_rows: dropped,
    })
}

fn sorted_by_coords(points: &Array2<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.nrows()).collect();
    order.sort_by(|&a, &b| {
        for c in 0..points.ncols() {
            let cmp = points[[a, c]].total_cmp(&points[[b, c]]);
            if cmp != std::cmp::Ordering::Equal {
                return cmp;
            }
        }
        a.cmp(&b)
    });
    order
}

/// Smallest row index of each group of byte-identical rows, ascending.
fn dedup_exact(points: &Array2<f64>) -> Vec<usize> {
    let order = sorted_by_coords(points);
    let identical = |a: usize, b: usize| {
        (0..points.ncols()).all(|c| points[[a, c]] == points[[b, c]])
    };
    let mut reps = Vec::new();
    let mut anchor = order[0];
    let mut group_min = order[0];
    for &i in order.iter().skip(1) {
        if identical(anchor, i) {
            group_min = group_min.min(i);
        } else {
            reps.push(group_min);
            anchor = i;
            group_min = i;
        }
    }
    reps.push(group_min);
    reps.sort_unstable();
    reps
}

/// Smallest row index of each cluster of rows linked within `tol`
/// (L-infinity, transitively closed). Pairs are found by a window scan over
/// the first coordinate, so cost is near-linear unless many rows share it.
fn dedup_tolerance(points: &Array2<f64>, tol: f64) -> Vec<usize> {
    let n = points.nrows();
    let order = sorted_by_coords(points);
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    let close = |a: usize, b: usize| {
        (0..points.ncols()).all(|c| (points[[a, c]] - points[[b, c]]).abs() <= tol)
    };
    for a_pos in 0..n {
        let a = order[a_pos];
        for &b in order.iter().skip(a_pos + 1) {
            if points[[b, 0]] - points[[a, 0]] > tol {
                break;
            }
            if close(a, b) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    // Root at the smaller index so representatives fall out.
                    let (lo, hi) = (ra.min(rb), ra.max(rb));
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut reps: Vec<usize> = (0..n).filter(|&i| find(&mut parent, i) == i).collect();
    reps.sort_unstable();
    reps
}

/// Identify convex-hull vertices of the cloud. Indices refer to rows of
/// `cloud.points`; of any group of near-duplicate rows only the
/// smallest-index representative can appear.
pub fn find_extreme_points(
    cloud: &SimplexCloud,
    method: &ExtremeMethod,
    tol: f64,
) -> Result<VertexSet> {
    let n = cloud.points.nrows();
    let j = cloud.points.ncols();
    if n < j {
        return Err(Error::Geometry(format!(
            "cloud must have at least J={j} rows, got {n}"
        )));
    }
    // The LP path clusters near-duplicates within DEDUP_TOL: repeated pure
    // rows land within float rounding of each other and would otherwise
    // "express" each twin through the other. The screen only needs exact
    // duplicates collapsed — among distinct floats a strict maximizer is
    // still unique, and it is a true vertex of the point set.
    let indices = match method {
        ExtremeMethod::ExactLp => {
            let reps = dedup_tolerance(&cloud.points, DEDUP_TOL);
            if reps.len() < 2 {
                return Err(Error::Geometry("degenerate cloud: all points identical".into()));
            }
            exact_lp_vertices(cloud, &reps, tol)
        }
        ExtremeMethod::Screen {
            random_directions,
            seed,
        } => {
            let reps = dedup_exact(&cloud.points);
            if reps.len() < 2 {
                return Err(Error::Geometry("degenerate cloud: all points identical".into()));
            }
            screen_vertices(cloud, &reps, *random_directions, *seed)
        }
    };
    if indices.is_empty() {
        return Err(Error::Geometry("no extreme points identified".into()));
    }
    Ok(VertexSet {
        candidate_indices: indices.clone(),
        indices,
    })
}

fn exact_lp_vertices(cloud: &SimplexCloud, reps: &[usize], tol: f64) -> Vec<usize> {
    let m = reps.len();
    let j = cloud.points.ncols();
    let coords = Array2::from_shape_fn((m, j), |(r, c)| cloud.points[[reps[r], c]]);
    let flags: Vec<bool> = (0..m)
        .into_par_iter()
        .map(|r| {
            let mut others = Array2::zeros((m - 1, j));
            let mut out = 0;
            for i in 0..m {
                if i != r {
                    others.row_mut(out).assign(&coords.row(i));
                    out += 1;
                }
            }
            convex_infeasibility(others.view(), coords.row(r)) > tol
        })
        .collect();
    reps.iter()
        .zip(flags)
        .filter_map(|(&idx, f)| f.then_some(idx))
        .collect()
}

fn screen_vertices(
    cloud: &SimplexCloud,
    reps: &[usize],
    random_directions: usize,
    seed: u64,
) -> Vec<usize> {
    let j = cloud.points.ncols();
    let mut bank: Vec<Vec<f64>> = Vec::new();
    for c in 0..j {
        let mut plus = vec![0.0; j];
        plus[c] = 1.0;
        bank.push(plus);
        let mut minus = vec![0.0; j];
        minus[c] = -1.0;
        bank.push(minus);
    }
    for a in 0..j {
        for b in 0..j {
            if a != b {
                let mut d = vec![0.0; j];
                d[a] = 1.0;
                d[b] = -1.0;
                bank.push(d);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_directions {
        // Gaussian direction via Box-Muller, normalized.
        let mut d = Vec::with_capacity(j);
        while d.len() < j {
            let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.random();
            let r = (-2.0 * u1.ln()).sqrt();
            d.push(r * (2.0 * std::f64::consts::PI * u2).cos());
            if d.len() < j {
                d.push(r * (2.0 * std::f64::consts::PI * u2).sin());
            }
        }
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            d.iter_mut().for_each(|v| *v /= norm);
            bank.push(d);
        }
    }

    let winners: Vec<Option<usize>> = bank
        .par_iter()
        .map(|d| {
            let mut best = f64::NEG_INFINITY;
            let mut best_rep = 0usize;
            let mut unique = false;
            for &idx in reps {
                let mut proj = 0.0;
                for c in 0..j {
                    proj += d[c] * cloud.points[[idx, c]];
                }
                if proj > best {
                    best = proj;
                    best_rep = idx;
                    unique = true;
                } else if proj == best {
                    unique = false;
                }
            }
            // Only a strictly unique maximizer is certifiably extreme.
            unique.then_some(best_rep)
        })
        .collect();

    let mut found: Vec<usize> = winners.into_iter().flatten().collect();
    found.sort_unstable();
    found.dedup();
    found
}

/// Prune the vertex set to `N0 = min(40K, N)` well-separated candidates via
/// seeded k-means; from each cluster the actual vertex nearest its centroid
/// is retained. Identity when `N <= N0`.
pub fn prune_vertices(vset: &VertexSet, cloud: &SimplexCloud, k: usize, seed: u64) -> VertexSet {
    let n = vset.indices.len();
    let n0 = (N0_MULTIPLIER * k.max(1)).min(n);
    if n <= n0 {
        return VertexSet {
            indices: vset.indices.clone(),
            candidate_indices: vset.indices.clone(),
        };
    }
    let j = cloud.points.ncols();
    let coords = Array2::from_shape_fn((n, j), |(r, c)| cloud.points[[vset.indices[r], c]]);
    let km = kmeans(coords.view(), n0, seed, 100);

    let mut candidates = Vec::with_capacity(n0);
    for cluster in 0..n0 {
        let mut best: Option<(f64, usize)> = None;
        for (r, &assign) in km.assignments.iter().enumerate() {
            if assign != cluster {
                continue;
            }
            let d2: f64 = (0..j)
                .map(|c| (coords[[r, c]] - km.centroids[[cluster, c]]).powi(2))
                .sum();
            let better = match best {
                None => true,
                Some((bd, bi)) => d2 < bd || (d2 == bd && vset.indices[r] < bi),
            };
            if better {
                best = Some((d2, vset.indices[r]));
            }
        }
        if let Some((_, idx)) = best {
            candidates.push(idx);
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    VertexSet {
        indices: vset.indices.clone(),
        candidate_indices: candidates,
    }
}

/// (K-1)-dimensional volume of the polytope spanned by the K rows: with
/// edge matrix `E` of rows `p_i - p_1`, volume = sqrt(det(E E^T)) / (K-1)!.
/// Affinely dependent rows give 0; a single point gives 1 by convention.
pub fn polytope_volume(points: ArrayView2<f64>) -> f64 {
    let k = points.nrows();
    if k == 0 {
        return 0.0;
    }
    if k == 1 {
        return 1.0;
    }
    let j = points.ncols();
    let m = k - 1;
    let mut gram = vec![0.0f64; m * m];
    for a in 0..m {
        for b in a..m {
            let mut dot = 0.0;
            for c in 0..j {
                dot += (points[[a + 1, c]] - points[[0, c]]) * (points[[b + 1, c]] - points[[0, c]]);
            }
            gram[a * m + b] = dot;
            gram[b * m + a] = dot;
        }
    }
    // Cholesky; non-positive pivot means affine dependence.
    let mut sqrt_det = 1.0;
    let mut l = vec![0.0f64; m * m];
    for i in 0..m {
        for c in 0..=i {
            let mut acc = gram[i * m + c];
            for t in 0..c {
                acc -= l[i * m + t] * l[c * m + t];
            }
            if c == i {
                if acc <= 0.0 {
                    return 0.0;
                }
                l[i * m + i] = acc.sqrt();
                sqrt_det *= l[i * m + i];
            } else {
                l[i * m + c] = acc / l[c * m + c];
            }
        }
    }
    let mut factorial = 1.0f64;
    for t in 2..=m {
        factorial *= t as f64;
    }
    sqrt_det / factorial
}

/// Subset-search strategy for [`select_max_volume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetStrategy {
    /// Exhaustive when `C(N0, K)` fits the budget, else greedy-swap.
    Auto,
    Exhaustive,
    GreedySwap,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc > u128::MAX / 2 {
            return u128::MAX;
        }
    }
    acc
}

/// Choose the K-candidate subset of maximum polytope volume. Exhaustive
/// search breaks ties toward the lexicographically smallest index set;
/// greedy-swap seeds with the farthest-point heuristic and applies
/// single-point swaps until no swap increases the volume.
pub fn select_max_volume(
    vset: &VertexSet,
    cloud: &SimplexCloud,
    k: usize,
    strategy: SubsetStrategy,
) -> Result<ProfileMatrix> {
    let cands = &vset.candidate_indices;
    if k == 0 {
        return Err(Error::Invalid("K must be at least 1".into()));
    }
    if cands.len() < k {
        return Err(Error::Geometry(format!(
            "only {} candidates for K={k}",
            cands.len()
        )));
    }
    let j = cloud.points.ncols();
    let coords = Array2::from_shape_fn((cands.len(), j), |(r, c)| cloud.points[[cands[r], c]]);

    let chosen: Vec<usize> = if cands.len() == k {
        (0..k).collect()
    } else {
        let use_exhaustive = match strategy {
            SubsetStrategy::Exhaustive => true,
            SubsetStrategy::GreedySwap => false,
            SubsetStrategy::Auto => binomial(cands.len(), k) <= EXHAUSTIVE_BUDGET,
        };
        if use_exhaustive {
            exhaustive_best(&coords, k)
        } else {
            greedy_swap_best(&coords, k)
        }
    };

    let best_vol = polytope_volume(subset(&coords, &chosen).view());
    if best_vol <= 0.0 {
        return Err(Error::Geometry(
            "all candidate subsets are degenerate (zero volume)".into(),
        ));
    }
    let rows: Vec<usize> = chosen.iter().map(|&i| cands[i]).collect();
    ProfileMatrix::new(subset(&coords, &chosen), rows)
}

fn subset(coords: &Array2<f64>, pick: &[usize]) -> Array2<f64> {
    let j = coords.ncols();
    Array2::from_shape_fn((pick.len(), j), |(r, c)| coords[[pick[r], c]])
}

fn exhaustive_best(coords: &Array2<f64>, k: usize) -> Vec<usize> {
    let n = coords.nrows();
    // Parallelize over the first element; each branch scans its lexicographic
    // block, so the global reduce keeps the smallest index set among ties.
    let best = (0..=(n - k))
        .into_par_iter()
        .map(|first| {
            let mut combo: Vec<usize> = (0..k).collect();
            combo[0] = first;
            for (offset, slot) in combo.iter_mut().enumerate().skip(1) {
                *slot = first + offset;
            }
            let mut local_best: (f64, Vec<usize>) = (-1.0, Vec::new());
            loop {
                let vol = polytope_volume(subset(coords, &combo).view());
                if vol > local_best.0 {
                    local_best = (vol, combo.clone());
                }
                // Advance positions 1..k (position 0 is fixed).
                let mut pos = k;
                loop {
                    if pos == 1 {
                        pos = 0;
                        break;
                    }
                    pos -= 1;
                    if combo[pos] < n - (k - pos) {
                        combo[pos] += 1;
                        for later in (pos + 1)..k {
                            combo[later] = combo[later - 1] + 1;
                        }
                        break;
                    }
                }
                if pos == 0 {
                    break;
                }
            }
            local_best
        })
        .reduce(
            || (-1.0, Vec::new()),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && !b.1.is_empty() && (a.1.is_empty() || b.1 < a.1)) {
                    b
                } else {
                    a
                }
            },
        );
    best.1
}

fn greedy_swap_best(coords: &Array2<f64>, k: usize) -> Vec<usize> {
    let n = coords.nrows();
    let j = coords.ncols();
    let dist2 = |a: usize, b: usize| -> f64 {
        (0..j).map(|c| (coords[[a, c]] - coords[[b, c]]).powi(2)).sum()
    };

    // Seed with greedy volume insertion: the farthest pair, then whichever
    // point grows the polytope most. Plain farthest-point seeding leaves the
    // swap loop in poor local optima too often.
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut best_pair = (0usize, 1.min(n - 1), -1.0f64);
    for a in 0..n {
        for b in (a + 1)..n {
            let d = dist2(a, b);
            if d > best_pair.2 {
                best_pair = (a, b, d);
            }
        }
    }
    selected.push(best_pair.0);
    if k > 1 {
        selected.push(best_pair.1);
    }
    while selected.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for cand in 0..n {
            if selected.contains(&cand) {
                continue;
            }
            let mut trial = selected.clone();
            trial.push(cand);
            let vol = polytope_volume(subset(coords, &trial).view());
            if best.map_or(true, |(_, bv)| vol > bv) {
                best = Some((cand, vol));
            }
        }
        selected.push(best.expect("candidates remain").0);
    }

    let mut current = polytope_volume(subset(coords, &selected).view());
    for _ in 0..1000 {
        let mut best_swap: Option<(usize, usize, f64)> = None;
        for pos in 0..k {
            for cand in 0..n {
                if selected.contains(&cand) {
                    continue;
                }
                let mut trial = selected.clone();
                trial[pos] = cand;
                let vol = polytope_volume(subset(coords, &trial).view());
                if vol > current && best_swap.map_or(true, |(_, _, bv)| vol > bv) {
                    best_swap = Some((pos, cand, vol));
                }
            }
        }
        match best_swap {
            Some((pos, cand, vol)) => {
                selected[pos] = cand;
                current = vol;
            }
            None => break,
        }
    }
    selected.sort_unstable();
    selected
}

/// Greedy conical-hull expansion: repeatedly pick the point with maximal
/// Euclidean residual after non-negative projection onto the cone of the
/// already-selected rows; the first pick is the row of maximal norm.
pub fn xray_select(cloud: &SimplexCloud, k: usize) -> Result<ProfileMatrix> {
    let n = cloud.points.nrows();
    let j = cloud.points.ncols();
    if n < k {
        return Err(Error::Geometry(format!("cloud has {n} rows, need K={k}")));
    }

    let norms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| cloud.points.row(i).iter().map(|v| v * v).sum())
        .collect();
    let first = argmax_ties_low(&norms);
    let mut selected = vec![first];

    while selected.len() < k {
        let s = selected.len();
        // Gram matrix of the selected basis.
        let mut ata = Array2::zeros((s, s));
        for a in 0..s {
            for b in a..s {
                let dot: f64 = (0..j)
                    .map(|c| cloud.points[[selected[a], c]] * cloud.points[[selected[b], c]])
                    .sum();
                ata[[a, b]] = dot;
                ata[[b, a]] = dot;
            }
        }
        let residuals: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let atb: Vec<f64> = selected
                    .iter()
                    .map(|&sel| {
                        (0..j)
                            .map(|c| cloud.points[[sel, c]] * cloud.points[[i, c]])
                            .sum()
                    })
                    .collect();
                nnls_gram(ata.view(), &atb, norms[i], 10 * s + 10).residual_sq
            })
            .collect();
        let next = argmax_ties_low(&residuals);
        if residuals[next] <= 1e-18 {
            return Err(Error::Geometry(format!(
                "residuals vanished after {s} points: data rank-deficient for K={k}"
            )));
        }
        selected.push(next);
    }
    selected.sort_unstable();
    let points = Array2::from_shape_fn((k, j), |(r, c)| cloud.points[[selected[r], c]]);
    ProfileMatrix::new(points, selected)
}

fn argmax_ties_low(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Direction bank size for a given dimension and random-direction count
/// (axes both signs, ordered pairwise differences, plus the random block).
pub fn direction_bank_size(j: usize, random_directions: usize) -> usize {
    2 * j + j * (j - 1) + random_directions
}
