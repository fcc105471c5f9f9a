//! Seeded k-means (k-means++ initialization, Lloyd iterations) with
//! deterministic tie-breaking so repeated runs are bit-identical.

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct KMeans {
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub iterations: usize,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cluster `points` (rows) into `k` groups. Ties in assignment go to the
/// smaller centroid index; an emptied cluster is reseeded with the point
/// farthest from its own centroid.
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64, max_iter: usize) -> KMeans {
    let n = points.nrows();
    let dim = points.ncols();
    assert!(k >= 1 && k <= n, "k must be in 1..=n");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = |i: usize| points.row(i).to_slice().expect("contiguous row");

    // k-means++ seeding.
    let mut centers: Vec<usize> = Vec::with_capacity(k);
    centers.push(rng.random_range(0..n));
    let mut min_d2: Vec<f64> = (0..n).map(|i| dist_sq(row(i), row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with chosen centers; take the
            // smallest-index point not already used.
            (0..n)
                .find(|i| !centers.contains(i))
                .expect("k <= n guarantees a free point")
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in min_d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centers.push(next);
        for i in 0..n {
            let d = dist_sq(row(i), row(next));
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }

    let mut centroids = Array2::<f64>::zeros((k, dim));
    for (c, &idx) in centers.iter().enumerate() {
        centroids.row_mut(c).assign(&points.row(idx));
    }

    let mut assignments = vec![0usize; n];
    let mut iterations = 0usize;
    for iter in 0..max_iter {
        iterations = iter + 1;
        let mut changed = false;
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = dist_sq(row(i), centroids.row(c).to_slice().expect("contiguous"));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        if !changed && iter > 0 {
            break;
        }

        let mut counts = vec![0usize; k];
        let mut sums = Array2::<f64>::zeros((k, dim));
        for i in 0..n {
            counts[assignments[i]] += 1;
            let mut dest = sums.row_mut(assignments[i]);
            dest += &points.row(i);
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed with the worst-fitting point.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = dist_sq(
                            row(a),
                            centroids
                                .row(assignments[a])
                                .to_slice()
                                .expect("contiguous"),
                        );
                        let db = dist_sq(
                            row(b),
                            centroids
                                .row(assignments[b])
                                .to_slice()
                                .expect("contiguous"),
                        );
                        da.partial_cmp(&db)
                            .unwrap()
                            .then(b.cmp(&a)) // prefer the smaller index on ties
                    })
                    .expect("non-empty points");
                centroids.row_mut(c).assign(&points.row(far));
            } else {
                for d in 0..dim {
                    centroids[[c, d]] = sums[[c, d]] / counts[c] as f64;
                }
            }
        }
    }

    KMeans {
        assignments,
        centroids,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_tight_clusters_are_separated() {
        let pts = array![
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [5.0, 5.0],
            [5.1, 5.0],
            [5.0, 5.1]
        ];
        let km = kmeans(pts.view(), 2, 42, 100);
        assert_eq!(km.assignments[0], km.assignments[1]);
        assert_eq!(km.assignments[0], km.assignments[2]);
        assert_eq!(km.assignments[3], km.assignments[4]);
        assert_eq!(km.assignments[3], km.assignments[5]);
        assert_ne!(km.assignments[0], km.assignments[3]);
    }

    #[test]
    fn deterministic_given_seed() {
        let pts = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64);
        let a = kmeans(pts.view(), 5, 9, 100);
        let b = kmeans(pts.view(), 5, 9, 100);
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn k_equal_n_gives_singletons() {
        let pts = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let km = kmeans(pts.view(), 3, 1, 100);
        let mut seen = km.assignments.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 3);
    }
}
