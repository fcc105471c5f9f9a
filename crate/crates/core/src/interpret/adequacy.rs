//! Geometric model-adequacy exports: the separability diagnostic on
//! row-normalized intensities and the 2-D hull/profile projections.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::apportion::{normalize_intensity, IntensityMatrix};
use crate::error::{Error, Result};
use crate::geometry::{ProfileMatrix, SimplexCloud};

/// Separability evidence for one source: the share of rows whose ratio
/// `(1 - W*) / W*` falls inside the window, plus a fixed-bin histogram
/// over the window.
#[derive(Debug, Clone)]
pub struct SourceSeparability {
    pub source: usize,
    pub mass_near_zero: f64,
    /// Counts per bin over `[0, window_hi]`, equal widths, last bin closed.
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SeparabilityReport {
    pub window_hi: f64,
    pub bins: usize,
    pub rows: usize,
    pub dropped_zero_rows: usize,
    pub per_source: Vec<SourceSeparability>,
}

/// Default upper edge of the separability window.
pub const SEPARABILITY_WINDOW: f64 = 0.2;

/// Check the probabilistic separability condition: each source should place
/// non-negligible mass of `(1 - W*_ik) / W*_ik` near zero.
pub fn separability_check(
    intensities: &IntensityMatrix,
    window_hi: f64,
    bins: usize,
) -> Result<SeparabilityReport> {
    if !(window_hi > 0.0) || bins == 0 {
        return Err(Error::Invalid("window and bin count must be positive".into()));
    }
    let normalized = normalize_intensity(intensities)?;
    let (n, k) = normalized.w_star.dim();
    let bin_width = window_hi / bins as f64;

    let mut per_source = Vec::with_capacity(k);
    for source in 0..k {
        let mut histogram = vec![0usize; bins];
        let mut inside = 0usize;
        for i in 0..n {
            let w = normalized.w_star[[i, source]];
            let ratio = if w > 0.0 { (1.0 - w) / w } else { f64::INFINITY };
            if ratio <= window_hi {
                inside += 1;
                let bin = ((ratio / bin_width) as usize).min(bins - 1);
                histogram[bin] += 1;
            }
        }
        per_source.push(SourceSeparability {
            source,
            mass_near_zero: inside as f64 / n as f64,
            histogram,
        });
    }
    Ok(SeparabilityReport {
        window_hi,
        bins,
        rows: n,
        dropped_zero_rows: normalized.dropped_zero_rows.len(),
        per_source,
    })
}

/// Whether a projected point comes from the data cloud or the profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Cloud,
    Profile,
}

/// One plot-ready 2-D projection point.
#[derive(Debug, Clone)]
pub struct HullPoint {
    pub pair: (String, String),
    pub kind: PointKind,
    /// Row index in the cloud, or source index for profiles.
    pub index: usize,
    pub x: f64,
    pub y: f64,
}

/// Project the (subsampled) cloud and the profile rows onto each requested
/// pollutant pair. Subsampling is seeded and caps the cloud at `cap` rows.
pub fn hull_adequacy_export(
    cloud: &SimplexCloud,
    profiles: &ProfileMatrix,
    pollutant_names: &[String],
    pairs: &[(usize, usize)],
    cap: usize,
    seed: u64,
) -> Result<Vec<HullPoint>> {
    let j = cloud.points.ncols();
    if profiles.h_star.ncols() != j || pollutant_names.len() != j {
        return Err(Error::Invalid("dimension mismatch across cloud/profiles/names".into()));
    }
    for &(a, b) in pairs {
        if a >= j || b >= j {
            return Err(Error::Invalid(format!("pollutant pair ({a}, {b}) out of range")));
        }
    }
    if cap == 0 {
        return Err(Error::Invalid("cap must be positive".into()));
    }

    let n = cloud.points.nrows();
    let sampled: Vec<usize> = if n <= cap {
        (0..n).collect()
    } else {
        // Partial Fisher-Yates over indices, then sorted for stable output.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..cap {
            let pick = rng.random_range(i..n);
            idx.swap(i, pick);
        }
        let mut chosen = idx[..cap].to_vec();
        chosen.sort_unstable();
        chosen
    };

    let mut out = Vec::with_capacity(pairs.len() * (sampled.len() + profiles.k()));
    for &(a, b) in pairs {
        let pair = (pollutant_names[a].clone(), pollutant_names[b].clone());
        for &row in &sampled {
            out.push(HullPoint {
                pair: pair.clone(),
                kind: PointKind::Cloud,
                index: row,
                x: cloud.points[[row, a]],
                y: cloud.points[[row, b]],
            });
        }
        for source in 0..profiles.k() {
            out.push(HullPoint {
                pair: pair.clone(),
                kind: PointKind::Profile,
                index: source,
                x: profiles.h_star[[source, a]],
                y: profiles.h_star[[source, b]],
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn intensities(w: ndarray::Array2<f64>) -> IntensityMatrix {
        let k = w.ncols();
        let n = w.nrows().max(1) as f64;
        let column_means = (0..k).map(|c| w.column(c).sum() / n).collect();
        IntensityMatrix {
            residual_norm: vec![0.0; w.nrows()],
            column_means,
            w_tilde: w,
        }
    }

    #[test]
    fn pure_rows_put_all_mass_at_zero() {
        // Rows pure in source 0 or source 1; ratio is 0 for the owning
        // source and the mass fractions split by membership.
        let w = array![
            [2.0, 0.0],
            [3.0, 0.0],
            [0.0, 1.0],
            [2.5, 0.0],
        ];
        let report = separability_check(&intensities(w), 0.2, 10).unwrap();
        assert_relative_eq!(report.per_source[0].mass_near_zero, 0.75);
        assert_relative_eq!(report.per_source[1].mass_near_zero, 0.25);
        assert_eq!(report.per_source[0].histogram[0], 3);
    }

    #[test]
    fn uniform_intensity_rows_have_no_mass_near_zero() {
        // W* = 1/3 everywhere: ratio = 2 for every cell, outside [0, 0.2].
        let w = array![
            [1.0, 1.0, 1.0],
            [2.0, 2.0, 2.0],
            [0.5, 0.5, 0.5],
        ];
        let report = separability_check(&intensities(w), 0.2, 10).unwrap();
        for source in &report.per_source {
            assert_eq!(source.mass_near_zero, 0.0);
            assert!(source.histogram.iter().all(|c| *c == 0));
        }
    }

    #[test]
    fn zero_rows_are_dropped_and_counted() {
        let w = array![[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]];
        let report = separability_check(&intensities(w), 0.2, 4).unwrap();
        assert_eq!(report.dropped_zero_rows, 1);
        assert_eq!(report.rows, 2);
    }

    #[test]
    fn all_zero_rows_error() {
        let w = ndarray::Array2::<f64>::zeros((3, 2));
        assert!(separability_check(&intensities(w), 0.2, 4).is_err());
    }

    #[test]
    fn generated_separable_data_passes_the_mass_check() {
        use crate::apportion::{fit_geometric, FitOptions};
        use crate::synth::{generate, SynthConfig};
        let config = SynthConfig {
            p_pure: 0.08,
            ..SynthConfig::separable(4000, 5, 3, 19)
        };
        let data = generate(&config).unwrap();
        let model = fit_geometric(&data.matrix, 3, &FitOptions::default()).unwrap();
        let report = separability_check(&model.intensities, 0.2, 20).unwrap();
        // Each source's near-zero mass is at least the pure-draw rate less
        // sampling slack.
        for source in &report.per_source {
            assert!(
                source.mass_near_zero >= 0.08 * 0.5,
                "source {} mass {}",
                source.source,
                source.mass_near_zero
            );
        }
    }

    fn tiny_cloud() -> SimplexCloud {
        SimplexCloud {
            points: array![[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]],
            row_sums: vec![1.0; 3],
            dropped_zero_rows: vec![],
        }
    }

    #[test]
    fn profiles_equal_to_cloud_rows_coincide_in_the_export() {
        let cloud = tiny_cloud();
        let profiles = ProfileMatrix::new(cloud.points.clone(), vec![0, 1, 2]).unwrap();
        let names: Vec<String> = vec!["A".into(), "B".into(), "C".into()];
        let points =
            hull_adequacy_export(&cloud, &profiles, &names, &[(0, 1)], 100, 1).unwrap();
        let cloud_pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.kind == PointKind::Cloud)
            .map(|p| (p.x, p.y))
            .collect();
        for p in points.iter().filter(|p| p.kind == PointKind::Profile) {
            // Profile rows are renormalized on construction, so match up to
            // float rounding rather than bit-exactly.
            assert!(cloud_pts
                .iter()
                .any(|&(x, y)| (x - p.x).abs() < 1e-12 && (y - p.y).abs() < 1e-12));
        }
    }

    #[test]
    fn cap_limits_the_cloud_sample_exactly() {
        use crate::geometry::normalize_rows_array;
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let raw = ndarray::Array2::from_shape_fn((5000, 3), |_| rng.random::<f64>() + 0.01);
        let cloud = normalize_rows_array(raw.view()).unwrap();
        let profiles = ProfileMatrix::new(tiny_cloud().points, vec![]).unwrap();
        let names: Vec<String> = vec!["A".into(), "B".into(), "C".into()];
        let points = hull_adequacy_export(&cloud, &profiles, &names, &[(0, 2)], 100, 4).unwrap();
        let cloud_count = points.iter().filter(|p| p.kind == PointKind::Cloud).count();
        assert_eq!(cloud_count, 100);
        // Deterministic under the same seed.
        let again = hull_adequacy_export(&cloud, &profiles, &names, &[(0, 2)], 100, 4).unwrap();
        let idx: Vec<usize> = points.iter().map(|p| p.index).collect();
        let idx2: Vec<usize> = again.iter().map(|p| p.index).collect();
        assert_eq!(idx, idx2);
    }

    #[test]
    fn projection_preserves_the_selected_coordinates() {
        let cloud = tiny_cloud();
        let profiles = ProfileMatrix::new(cloud.points.clone(), vec![]).unwrap();
        let names: Vec<String> = vec!["A".into(), "B".into(), "C".into()];
        let points = hull_adequacy_export(&cloud, &profiles, &names, &[(2, 0)], 10, 0).unwrap();
        for p in points.iter().filter(|p| p.kind == PointKind::Cloud) {
            assert_eq!(p.x, cloud.points[[p.index, 2]]);
            assert_eq!(p.y, cloud.points[[p.index, 0]]);
        }
    }
}
