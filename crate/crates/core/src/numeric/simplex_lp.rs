//! Phase-1 simplex feasibility for convex-combination membership.
//!
//! A point is a vertex of the convex hull of a finite set exactly when it
//! cannot be written as a convex combination of the remaining points. The
//! check below poses that as a linear feasibility problem and returns the
//! phase-1 optimum (the minimal total artificial mass): zero means
//! expressible, a strictly positive value is an extremality certificate.
//! Bland's rule keeps the pivoting finite and deterministic.

use ndarray::{ArrayView1, ArrayView2};

const PIVOT_EPS: f64 = 1e-11;

/// Minimal L1 constraint violation over `λ >= 0` of the system
/// `points^T λ = target`, `Σ λ = 1`. Returns a value `>= 0`.
pub fn convex_infeasibility(points: ArrayView2<f64>, target: ArrayView1<f64>) -> f64 {
    let m = points.nrows();
    let dim = points.ncols();
    assert_eq!(target.len(), dim);
    if m == 0 {
        return 1.0 + target.iter().map(|v| v.abs()).sum::<f64>();
    }

    let rows = dim + 1;
    let cols = m + rows; // λ variables then one artificial per row
    let mut a = vec![0.0f64; rows * cols];
    let mut rhs = vec![0.0f64; rows];

    for r in 0..dim {
        let flip = if target[r] < 0.0 { -1.0 } else { 1.0 };
        rhs[r] = flip * target[r];
        for j in 0..m {
            a[r * cols + j] = flip * points[[j, r]];
        }
    }
    rhs[dim] = 1.0;
    for j in 0..m {
        a[dim * cols + j] = 1.0;
    }
    for r in 0..rows {
        a[r * cols + m + r] = 1.0;
    }

    // basis[r] = column currently basic in row r (artificials to start).
    let mut basis: Vec<usize> = (0..rows).map(|r| m + r).collect();
    let cost = |j: usize| if j >= m { 1.0 } else { 0.0 };

    let max_pivots = 50 * (rows + cols);
    for _ in 0..max_pivots {
        // Reduced costs from the current tableau; Bland: smallest improving index.
        let mut enter = None;
        for j in 0..cols {
            let mut reduced = cost(j);
            for r in 0..rows {
                reduced -= cost(basis[r]) * a[r * cols + j];
            }
            if reduced < -PIVOT_EPS {
                enter = Some(j);
                break;
            }
        }
        let Some(j) = enter else { break };

        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            let coef = a[r * cols + j];
            if coef > PIVOT_EPS {
                let ratio = rhs[r] / coef;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio - 1e-12
                            || (ratio <= lratio + 1e-12 && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((r, _)) = leave else { break };

        // Pivot on (r, j).
        let piv = a[r * cols + j];
        for c in 0..cols {
            a[r * cols + c] /= piv;
        }
        rhs[r] /= piv;
        for rr in 0..rows {
            if rr == r {
                continue;
            }
            let factor = a[rr * cols + j];
            if factor != 0.0 {
                for c in 0..cols {
                    a[rr * cols + c] -= factor * a[r * cols + c];
                }
                rhs[rr] -= factor * rhs[r];
            }
        }
        basis[r] = j;
    }

    let mut infeasibility = 0.0;
    for r in 0..rows {
        if basis[r] >= m {
            infeasibility += rhs[r].max(0.0);
        }
    }
    infeasibility
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn interior_point_is_feasible() {
        let corners = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let centroid = array![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        assert!(convex_infeasibility(corners.view(), centroid.view()) < 1e-10);
    }

    #[test]
    fn corner_is_infeasible_against_the_rest() {
        let others = array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.4, 0.3, 0.3]];
        let corner = array![1.0, 0.0, 0.0];
        assert!(convex_infeasibility(others.view(), corner.view()) > 1e-3);
    }

    #[test]
    fn midpoint_of_segment_is_feasible() {
        let ends = array![[0.2, 0.8], [0.8, 0.2]];
        let mid = array![0.5, 0.5];
        assert!(convex_infeasibility(ends.view(), mid.view()) < 1e-10);
    }

    #[test]
    fn single_far_point() {
        let one = array![[1.0, 0.0]];
        let target = array![0.0, 1.0];
        assert!(convex_infeasibility(one.view(), target.view()) > 0.5);
    }
}
