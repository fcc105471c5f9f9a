//! Quantiles with linear interpolation between closest ranks (the common
//! "type 7" rule). Fixed here once so every consumer (scaling parameters,
//! summary tables, bootstrap confidence intervals) is bit-reproducible.

/// Quantile of an ascending-sorted, non-empty slice at probability `p` in
/// `[0, 1]`: `h = (n - 1) p`, interpolating linearly between the values at
/// `floor(h)` and `floor(h) + 1`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Quantile of an unsorted slice; copies and sorts.
pub fn quantile_of(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&sorted, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_rule_on_integer_grid() {
        // 0..=100: h = 100 * 0.85 = 85 exactly.
        let grid: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(quantile_sorted(&grid, 0.85), 85.0);
        assert_eq!(quantile_sorted(&grid, 0.15), 15.0);
        assert_eq!(quantile_sorted(&grid, 0.0), 0.0);
        assert_eq!(quantile_sorted(&grid, 1.0), 100.0);
    }

    #[test]
    fn interpolates_between_ranks() {
        // n = 4, p = 0.5 -> h = 1.5 -> midpoint of the middle two.
        let v = [1.0, 2.0, 10.0, 11.0];
        assert_eq!(quantile_sorted(&v, 0.5), 6.0);
    }

    #[test]
    fn single_element() {
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn unsorted_input() {
        assert_eq!(quantile_of(&[3.0, 1.0, 2.0], 0.5), 2.0);
    }
}
