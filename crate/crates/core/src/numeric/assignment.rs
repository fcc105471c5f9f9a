//! Exact minimum-cost assignment (Hungarian algorithm) with a lexicographic
//! refinement pass so tied optima resolve deterministically.

use ndarray::{Array2, ArrayView2};

/// Optimal assignment for a square cost matrix: returns `perm` with
/// `perm[row] = col`, minimizing total cost; among cost-ties the
/// lexicographically smallest permutation is returned.
pub fn min_cost_assignment(cost: ArrayView2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(cost.ncols(), n, "cost matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    let (_, opt) = hungarian(&cost.to_owned());
    let tie_eps = 1e-9 * (1.0 + opt.abs());

    // Fix rows in order, choosing the smallest column that still admits an
    // optimal completion.
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    let mut fixed_cost = 0.0;
    for row in 0..n {
        let remaining_rows: Vec<usize> = ((row + 1)..n).collect();
        let mut chosen = None;
        for col in 0..n {
            if used[col] {
                continue;
            }
            let remaining_cols: Vec<usize> =
                (0..n).filter(|&c| !used[c] && c != col).collect();
            let completion = if remaining_rows.is_empty() {
                0.0
            } else {
                let sub = Array2::from_shape_fn(
                    (remaining_rows.len(), remaining_cols.len()),
                    |(i, j)| cost[[remaining_rows[i], remaining_cols[j]]],
                );
                hungarian(&sub).1
            };
            if fixed_cost + cost[[row, col]] + completion <= opt + tie_eps {
                chosen = Some(col);
                break;
            }
        }
        let col = chosen.expect("an optimal completion always exists");
        perm[row] = col;
        used[col] = true;
        fixed_cost += cost[[row, col]];
    }
    perm
}

/// Classic O(n^3) Hungarian algorithm; returns (perm, total cost).
fn hungarian(cost: &Array2<f64>) -> (Vec<usize>, f64) {
    let n = cost.nrows();
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // row matched to column j (1-based; 0 = none)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![usize::MAX; n];
    for j in 1..=n {
        if p[j] > 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    let total = (0..n).map(|r| cost[[r, perm[r]]]).sum();
    (perm, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn brute_force(cost: &Array2<f64>) -> (Vec<usize>, f64) {
        let n = cost.nrows();
        let mut cols: Vec<usize> = (0..n).collect();
        let mut best: Option<(Vec<usize>, f64)> = None;
        permute(&mut cols, 0, &mut |perm| {
            let total: f64 = (0..n).map(|r| cost[[r, perm[r]]]).sum();
            match &best {
                Some((bp, bt)) => {
                    if total < bt - 1e-12 || ((total - bt).abs() <= 1e-12 && perm < bp.as_slice())
                    {
                        best = Some((perm.to_vec(), total));
                    }
                }
                None => best = Some((perm.to_vec(), total)),
            }
        });
        best.unwrap()
    }

    fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == items.len() {
            visit(items);
            return;
        }
        // Lexicographic traversal: repeatedly rotate the k-th position.
        let slice: Vec<usize> = items[k..].to_vec();
        let mut sorted = slice.clone();
        sorted.sort_unstable();
        for &choice in &sorted {
            let pos = items[k..].iter().position(|&x| x == choice).unwrap() + k;
            items.swap(k, pos);
            items[k + 1..].sort_unstable();
            permute(items, k + 1, visit);
        }
        items[k..].copy_from_slice(&slice);
    }

    #[test]
    fn matches_brute_force_on_random_costs() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(2..=5);
            let cost = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
            let got = min_cost_assignment(cost.view());
            let (want, want_cost) = brute_force(&cost);
            let got_cost: f64 = (0..n).map(|r| cost[[r, got[r]]]).sum();
            assert!((got_cost - want_cost).abs() < 1e-9);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn all_equal_costs_give_identity() {
        let cost = Array2::from_elem((4, 4), 1.0);
        assert_eq!(min_cost_assignment(cost.view()), vec![0, 1, 2, 3]);
    }

    #[test]
    fn swap_is_recovered() {
        let cost = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(min_cost_assignment(cost.view()), vec![1, 0]);
    }
}
