//! Non-negative least squares by the active-set method with deterministic
//! pivoting (largest dual, ties to the smallest index).
//!
//! The solver works on the normal equations, which keeps per-call cost at
//! `O(iterations * k^3)` for `k` unknowns regardless of how many rows the
//! design has — callers with tall systems pass precomputed Gram matrices.

use ndarray::{Array2, ArrayView1, ArrayView2};

/// Outcome of one NNLS solve.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    /// Squared residual `||Ax - b||^2`, clamped at zero.
    pub residual_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `||Ax - b||_2` subject to `x >= 0`.
pub fn nnls(a: ArrayView2<f64>, b: ArrayView1<f64>, max_iter: usize) -> NnlsSolution {
    let ata = a.t().dot(&a);
    let atb = a.t().dot(&b);
    let btb = b.dot(&b);
    nnls_gram(
        ata.view(),
        atb.as_slice().expect("contiguous"),
        btb,
        max_iter,
    )
}

/// Same problem expressed through `A^T A`, `A^T b`, and `b^T b`.
pub fn nnls_gram(ata: ArrayView2<f64>, atb: &[f64], btb: f64, max_iter: usize) -> NnlsSolution {
    let k = atb.len();
    assert_eq!(ata.nrows(), k);
    assert_eq!(ata.ncols(), k);

    let scale = atb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let grad_tol = 1e-12 * (1.0 + scale);

    let mut x = vec![0.0f64; k];
    let mut passive = vec![false; k];
    // Columns rejected as numerically dependent on the current passive set.
    let mut banned = vec![false; k];
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < max_iter {
        // Dual vector w = A^T b - A^T A x on the active (zero) set.
        let mut best: Option<(usize, f64)> = None;
        for j in 0..k {
            if passive[j] || banned[j] {
                continue;
            }
            let mut w = atb[j];
            for l in 0..k {
                w -= ata[[j, l]] * x[l];
            }
            if w > grad_tol && best.map_or(true, |(_, bw)| w > bw) {
                best = Some((j, w));
            }
        }
        let Some((enter, _)) = best else {
            converged = true;
            break;
        };
        passive[enter] = true;
        iterations += 1;

        // Inner loop: restore feasibility of the passive-set LS solution.
        loop {
            let members: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let Some(z) = solve_passive(&ata, atb, &members) else {
                // Entering column is numerically dependent; reject it for good.
                passive[enter] = false;
                banned[enter] = true;
                break;
            };

            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (idx, &j) in members.iter().enumerate() {
                    x[j] = z[idx];
                }
                break;
            }

            // Step toward z only as far as feasibility allows.
            let mut alpha = f64::INFINITY;
            for (idx, &j) in members.iter().enumerate() {
                if z[idx] <= 0.0 {
                    let denom = x[j] - z[idx];
                    let ratio = if denom > 0.0 { x[j] / denom } else { 0.0 };
                    if ratio < alpha {
                        alpha = ratio;
                    }
                }
            }
            for (idx, &j) in members.iter().enumerate() {
                x[j] += alpha * (z[idx] - x[j]);
            }
            for &j in &members {
                if x[j] <= 1e-14 * (1.0 + scale) {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    if !converged {
        // One final dual check: the cap may land exactly on the optimum.
        converged = (0..k).all(|j| {
            if passive[j] || banned[j] {
                return true;
            }
            let mut w = atb[j];
            for l in 0..k {
                w -= ata[[j, l]] * x[l];
            }
            w <= grad_tol
        });
    }

    let mut quad = 0.0;
    for j in 0..k {
        if x[j] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for l in 0..k {
            row += ata[[j, l]] * x[l];
        }
        quad += x[j] * (row - 2.0 * atb[j]);
    }
    let residual_sq = (btb + quad).max(0.0);

    NnlsSolution {
        x,
        residual_sq,
        iterations,
        converged,
    }
}

/// Solve the unconstrained LS on the passive subset via Gaussian elimination
/// with partial pivoting on the Gram submatrix. `None` when singular.
fn solve_passive(ata: &ArrayView2<f64>, atb: &[f64], members: &[usize]) -> Option<Vec<f64>> {
    let m = members.len();
    let mut a = Array2::<f64>::zeros((m, m));
    let mut rhs = vec![0.0f64; m];
    for (r, &jr) in members.iter().enumerate() {
        rhs[r] = atb[jr];
        for (c, &jc) in members.iter().enumerate() {
            a[[r, c]] = ata[[jr, jc]];
        }
    }
    let pivot_tol = 1e-13 * (1.0 + a.iter().fold(0.0f64, |mx, v| mx.max(v.abs())));

    let mut perm: Vec<usize> = (0..m).collect();
    for col in 0..m {
        let (best_row, best_val) = (col..m)
            .map(|r| (r, a[[perm[r], col]].abs()))
            .fold((col, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best_val <= pivot_tol {
            return None;
        }
        perm.swap(col, best_row);
        let p = perm[col];
        for r in (col + 1)..m {
            let q = perm[r];
            let factor = a[[q, col]] / a[[p, col]];
            if factor != 0.0 {
                for c in col..m {
                    a[[q, c]] -= factor * a[[p, c]];
                }
                rhs[q] -= factor * rhs[p];
            }
        }
    }
    let mut z = vec![0.0f64; m];
    for col in (0..m).rev() {
        let p = perm[col];
        let mut acc = rhs[p];
        for c in (col + 1)..m {
            acc -= a[[p, c]] * z[c];
        }
        z[col] = acc / a[[p, col]];
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn unconstrained_optimum_is_returned_when_nonnegative() {
        // A = I, b = (1, 2): x = b.
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        let b = array![1.0, 2.0];
        let sol = nnls(a.view(), b.view(), 20);
        assert!(sol.converged);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.x[1] - 2.0).abs() < 1e-12);
        assert!(sol.residual_sq < 1e-12);
    }

    #[test]
    fn negative_component_is_clamped() {
        // Fit b = (-1, 1) with columns e1, e2: optimum at x = (0, 1).
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        let b = array![-1.0, 1.0];
        let sol = nnls(a.view(), b.view(), 20);
        assert!(sol.converged);
        assert_eq!(sol.x[0], 0.0);
        assert!((sol.x[1] - 1.0).abs() < 1e-12);
        assert!((sol.residual_sq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let a = array![[1.0, 0.5], [0.2, 1.0], [0.3, 0.3]];
        let b = array![0.0, 0.0, 0.0];
        let sol = nnls(a.view(), b.view(), 20);
        assert!(sol.converged);
        assert_eq!(sol.x, vec![0.0, 0.0]);
    }

    #[test]
    fn duplicate_columns_do_not_cycle() {
        let a = array![[1.0, 1.0], [2.0, 2.0]];
        let b = array![1.0, 2.0];
        let sol = nnls(a.view(), b.view(), 20);
        assert!(sol.converged);
        // Either column alone explains b exactly.
        assert!(sol.residual_sq < 1e-12);
    }

    #[test]
    fn matches_dense_grid_on_small_random_problems() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let a = Array2::from_shape_fn((3, 2), |_| rng.random::<f64>());
            let b = ndarray::Array1::from_shape_fn(3, |_| rng.random::<f64>());
            let sol = nnls(a.view(), b.view(), 20);
            assert!(sol.converged);

            // Coarse grid oracle over [0, 3]^2.
            let mut best = f64::INFINITY;
            let steps = 300;
            for i in 0..=steps {
                for j in 0..=steps {
                    let x = [3.0 * i as f64 / steps as f64, 3.0 * j as f64 / steps as f64];
                    let mut obj = 0.0;
                    for r in 0..3 {
                        let d = a[[r, 0]] * x[0] + a[[r, 1]] * x[1] - b[r];
                        obj += d * d;
                    }
                    best = best.min(obj);
                }
            }
            assert!(
                sol.residual_sq <= best + 1e-9,
                "nnls {} worse than grid {}",
                sol.residual_sq,
                best
            );
        }
    }
}
