//! Bootstrap uncertainty for the attribution matrix, cross-resample source
//! alignment, and the stability diagnostics used to choose the number of
//! sources.
//!
//! Replicates resample rows i.i.d. with replacement; the resampling unit is
//! isolated behind one sampler function so a block variant can be swapped
//! in later (and so tests can force degenerate resamples). Each replicate
//! draws from its own seeded substream and results combine by replicate
//! index, so parallel execution is bit-identical to sequential.

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::apportion::{AttributionMatrix, Estimator, IntensityMatrix, SourceModel};
use crate::error::{Error, Result};
use crate::ingest::PollutantMatrix;
use crate::numeric::assignment::min_cost_assignment;
use crate::numeric::splitmix64;

/// Cells with bootstrap mean below this are excluded from the CV diagnostic.
pub const DEFAULT_MEAN_FLOOR: f64 = 0.03;

/// One successful bootstrap replicate, aligned to the reference fit.
#[derive(Debug, Clone)]
pub struct BootstrapRun {
    pub replicate: usize,
    /// Resampled row indices (n draws with replacement).
    pub indices: Vec<u32>,
    /// Attribution with rows permuted into the reference source order.
    pub attribution: AttributionMatrix,
    /// `permutation[k]` is the replicate source matched to reference source k.
    pub permutation: Vec<usize>,
    /// Intensities with columns in reference order; kept on request only.
    pub intensities: Option<IntensityMatrix>,
}

/// Cellwise bootstrap mean and standard error of the attribution.
#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    pub phi_mean: Array2<f64>,
    pub phi_se: Array2<f64>,
    pub k: usize,
    /// Successful replicates the summary is built from.
    pub replicates: usize,
    pub requested: usize,
    pub failed: usize,
    pub pollutant_names: Vec<String>,
}

/// Stability diagnostics for one candidate K.
#[derive(Debug, Clone)]
pub struct StabilityDiagnostics {
    /// Mean cellwise coefficient of variation (SE / mean) over cells with
    /// bootstrap mean at or above the floor.
    pub cvar: f64,
    /// Mean over pollutants of the bootstrap probability that the
    /// bootstrap-mean top source stays on top.
    pub rank_stability: f64,
    pub per_pollutant_rank_stability: Vec<f64>,
    pub excluded_cells: usize,
}

#[derive(Debug, Clone)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Retain per-replicate aligned intensities (needed for the regression
    /// analyses; costs O(n K) memory per replicate).
    pub retain_intensities: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: 100,
            seed: 0,
            retain_intensities: false,
        }
    }
}

/// Reference fit plus aligned replicates and their summary.
#[derive(Debug)]
pub struct BootstrapResult {
    pub reference: SourceModel,
    pub runs: Vec<BootstrapRun>,
    pub summary: BootstrapSummary,
}

/// Default resampler: n i.i.d. row draws with replacement from a
/// replicate-indexed substream of the base seed.
pub fn iid_row_sampler(replicate: usize, n: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    (0..n).map(|_| rng.random_range(0..n) as u32).collect()
}

/// Bootstrap with the default i.i.d. row sampler.
pub fn bootstrap(
    matrix: &PollutantMatrix,
    k: usize,
    estimator: &Estimator,
    options: &BootstrapOptions,
) -> Result<BootstrapResult> {
    bootstrap_with_sampler(matrix, k, estimator, options, iid_row_sampler)
}

/// Bootstrap with a caller-supplied sampler `(replicate, n, seed) -> rows`.
/// Failed replicate fits are dropped (not retried) and counted.
pub fn bootstrap_with_sampler(
    matrix: &PollutantMatrix,
    k: usize,
    estimator: &Estimator,
    options: &BootstrapOptions,
    sampler: impl Fn(usize, usize, u64) -> Vec<u32> + Sync,
) -> Result<BootstrapResult> {
    if options.replicates < 2 {
        return Err(Error::Invalid("bootstrap needs at least 2 replicates".into()));
    }
    let reference = estimator.fit(matrix, k, options.seed)?;
    let n = matrix.nrows();

    let outcomes: Vec<Result<BootstrapRun>> = (0..options.replicates)
        .into_par_iter()
        .map(|b| {
            let indices = sampler(b, n, options.seed);
            let rows: Vec<usize> = indices.iter().map(|&i| i as usize).collect();
            let sub = matrix.select_rows(&rows);
            let fit_seed = splitmix64(options.seed.wrapping_add(0x9e37).wrapping_add(b as u64));
            let model = estimator.fit(&sub, k, fit_seed)?;
            let permutation =
                align_sources(reference.attribution.phi.view(), model.attribution.phi.view())?;

            let (kk, j) = model.attribution.phi.dim();
            let phi = Array2::from_shape_fn((kk, j), |(r, c)| {
                model.attribution.phi[[permutation[r], c]]
            });
            let attribution = AttributionMatrix {
                phi,
                pollutant_names: model.attribution.pollutant_names.clone(),
                source_labels: reference.attribution.source_labels.clone(),
            };
            let intensities = options.retain_intensities.then(|| {
                let w = &model.intensities.w_tilde;
                let aligned = Array2::from_shape_fn(w.dim(), |(i, c)| w[[i, permutation[c]]]);
                IntensityMatrix {
                    w_tilde: aligned,
                    residual_norm: model.intensities.residual_norm.clone(),
                    column_means: permutation
                        .iter()
                        .map(|&c| model.intensities.column_means[c])
                        .collect(),
                }
            });
            Ok(BootstrapRun {
                replicate: b,
                indices,
                attribution,
                permutation,
                intensities,
            })
        })
        .collect();

    let requested = options.replicates;
    let mut runs = Vec::with_capacity(requested);
    let mut failed = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(run) => runs.push(run),
            Err(_) => failed += 1,
        }
    }
    if runs.len() < 2 {
        return Err(Error::Analysis(format!(
            "only {} of {requested} replicates fit successfully",
            runs.len()
        )));
    }
    let summary = summarize_runs(&reference, &runs, requested, failed);
    Ok(BootstrapResult {
        reference,
        runs,
        summary,
    })
}

/// Cellwise mean and sample-SD standard error across aligned replicates.
/// Invariant to the order of `runs`.
pub fn summarize_runs(
    reference: &SourceModel,
    runs: &[BootstrapRun],
    requested: usize,
    failed: usize,
) -> BootstrapSummary {
    let (k, j) = reference.attribution.phi.dim();
    let b = runs.len();
    let mut phi_mean = Array2::<f64>::zeros((k, j));
    for run in runs {
        phi_mean += &run.attribution.phi;
    }
    phi_mean.mapv_inplace(|v| v / b as f64);
    let mut phi_se = Array2::<f64>::zeros((k, j));
    for run in runs {
        for r in 0..k {
            for c in 0..j {
                let d = run.attribution.phi[[r, c]] - phi_mean[[r, c]];
                phi_se[[r, c]] += d * d;
            }
        }
    }
    phi_se.mapv_inplace(|v| (v / (b as f64 - 1.0)).sqrt());
    BootstrapSummary {
        phi_mean,
        phi_se,
        k,
        replicates: b,
        requested,
        failed,
        pollutant_names: reference.attribution.pollutant_names.clone(),
    }
}

/// Match candidate sources to reference sources: the permutation minimizing
/// total L1 row distance, solved exactly; ties resolve to the
/// lexicographically smallest permutation. Works on attribution or profile
/// rows alike.
pub fn align_sources(reference: ArrayView2<f64>, candidate: ArrayView2<f64>) -> Result<Vec<usize>> {
    if reference.dim() != candidate.dim() {
        return Err(Error::Invalid(format!(
            "alignment shape mismatch: {:?} vs {:?}",
            reference.dim(),
            candidate.dim()
        )));
    }
    let k = reference.nrows();
    let cost = Array2::from_shape_fn((k, k), |(r, c)| {
        reference
            .row(r)
            .iter()
            .zip(candidate.row(c).iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    });
    Ok(min_cost_assignment(cost.view()))
}

/// Compute the CV and rank-stability diagnostics from a bootstrap summary
/// and its aligned runs.
pub fn diagnostics(
    summary: &BootstrapSummary,
    runs: &[BootstrapRun],
    mean_floor: f64,
) -> Result<StabilityDiagnostics> {
    if runs.is_empty() {
        return Err(Error::Invalid("diagnostics need at least one run".into()));
    }
    let (k, j) = summary.phi_mean.dim();

    let mut cv_sum = 0.0;
    let mut cv_count = 0usize;
    let mut excluded = 0usize;
    for r in 0..k {
        for c in 0..j {
            let mean = summary.phi_mean[[r, c]];
            if mean >= mean_floor {
                cv_sum += summary.phi_se[[r, c]] / mean;
                cv_count += 1;
            } else {
                excluded += 1;
            }
        }
    }
    if cv_count == 0 {
        return Err(Error::Analysis(
            "every attribution cell fell below the mean floor".into(),
        ));
    }

    let top_of = |phi: &Array2<f64>, col: usize| -> usize {
        let mut best = 0usize;
        for r in 1..k {
            if phi[[r, col]] > phi[[best, col]] {
                best = r;
            }
        }
        best
    };
    let mut per_pollutant = Vec::with_capacity(j);
    for c in 0..j {
        let reference_top = top_of(&summary.phi_mean, c);
        let preserved = runs
            .iter()
            .filter(|run| top_of(&run.attribution.phi, c) == reference_top)
            .count();
        per_pollutant.push(preserved as f64 / runs.len() as f64);
    }
    let rank_stability = per_pollutant.iter().sum::<f64>() / j as f64;

    Ok(StabilityDiagnostics {
        cvar: cv_sum / cv_count as f64,
        rank_stability,
        per_pollutant_rank_stability: per_pollutant,
        excluded_cells: excluded,
    })
}

/// Diagnostics for one candidate K in a [`select_k`] table.
#[derive(Debug, Clone)]
pub struct KDiagnostics {
    pub k: usize,
    pub diagnostics: StabilityDiagnostics,
    pub failed_replicates: usize,
}

/// Run bootstrap + diagnostics for each candidate K and emit the table.
/// No K is auto-selected; the two criteria are weighed by the caller.
pub fn select_k(
    matrix: &PollutantMatrix,
    k_candidates: &[usize],
    estimator: &Estimator,
    options: &BootstrapOptions,
    mean_floor: f64,
) -> Result<Vec<KDiagnostics>> {
    if k_candidates.is_empty() {
        return Err(Error::Invalid("no candidate K values".into()));
    }
    let mut table = Vec::with_capacity(k_candidates.len());
    for &k in k_candidates {
        let result = bootstrap(matrix, k, estimator, options)?;
        let diag = diagnostics(&result.summary, &result.runs, mean_floor)?;
        table.push(KDiagnostics {
            k,
            diagnostics: diag,
            failed_replicates: result.summary.failed,
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apportion::FitOptions;
    use crate::synth::{generate, SynthConfig};
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn alignment_recovers_a_row_swap() {
        let reference = array![[0.9, 0.1, 0.0], [0.0, 0.2, 0.8]];
        let candidate = array![[0.0, 0.2, 0.8], [0.9, 0.1, 0.0]];
        assert_eq!(
            align_sources(reference.view(), candidate.view()).unwrap(),
            vec![1, 0]
        );
    }

    #[test]
    fn alignment_of_identical_matrices_is_identity() {
        let reference = array![[0.9, 0.1], [0.1, 0.9], [0.5, 0.5]];
        assert_eq!(
            align_sources(reference.view(), reference.view()).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn alignment_matches_exhaustive_permutation_search() {
        use itertools::Itertools;
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..40 {
            let reference = Array2::from_shape_fn((3, 4), |_| rng.random::<f64>());
            let candidate = Array2::from_shape_fn((3, 4), |_| rng.random::<f64>());
            let got = align_sources(reference.view(), candidate.view()).unwrap();
            let mut best: Option<(Vec<usize>, f64)> = None;
            for perm in (0..3usize).permutations(3) {
                let cost: f64 = (0..3)
                    .map(|r| {
                        reference
                            .row(r)
                            .iter()
                            .zip(candidate.row(perm[r]).iter())
                            .map(|(a, b)| (a - b).abs())
                            .sum::<f64>()
                    })
                    .sum();
                let better = match &best {
                    None => true,
                    Some((bp, bc)) => {
                        cost < bc - 1e-12 || ((cost - bc).abs() <= 1e-12 && &perm < bp)
                    }
                };
                if better {
                    best = Some((perm, cost));
                }
            }
            assert_eq!(got, best.unwrap().0);
        }
    }

    #[test]
    fn aligning_an_aligned_candidate_is_idempotent() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reference = Array2::from_shape_fn((4, 5), |_| rng.random::<f64>());
        let candidate = Array2::from_shape_fn((4, 5), |_| rng.random::<f64>());
        let perm = align_sources(reference.view(), candidate.view()).unwrap();
        let aligned = Array2::from_shape_fn((4, 5), |(r, c)| candidate[[perm[r], c]]);
        assert_eq!(
            align_sources(reference.view(), aligned.view()).unwrap(),
            vec![0, 1, 2, 3]
        );
    }

    fn separable_estimator() -> Estimator {
        Estimator::Geometric(FitOptions::default())
    }

    #[test]
    fn forced_identical_replicates_have_zero_se_and_perfect_stability() {
        let data = generate(&SynthConfig::separable(400, 5, 3, 5)).unwrap();
        let options = BootstrapOptions {
            replicates: 4,
            seed: 9,
            retain_intensities: false,
        };
        // Degenerate sampler: every replicate is the full data in order.
        let result = bootstrap_with_sampler(
            &data.matrix,
            3,
            &separable_estimator(),
            &options,
            |_b, n, _seed| (0..n as u32).collect(),
        )
        .unwrap();
        assert_eq!(result.summary.failed, 0);
        assert!(result.summary.phi_se.iter().all(|v| *v == 0.0));
        for (a, b) in result
            .summary
            .phi_mean
            .iter()
            .zip(result.reference.attribution.phi.iter())
        {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let diag = diagnostics(&result.summary, &result.runs, DEFAULT_MEAN_FLOOR).unwrap();
        assert_eq!(diag.cvar, 0.0);
        assert_eq!(diag.rank_stability, 1.0);
    }

    #[test]
    fn noise_free_separable_bootstrap_is_tight() {
        let data = generate(&SynthConfig::separable(1500, 5, 3, 8)).unwrap();
        let options = BootstrapOptions {
            replicates: 8,
            seed: 4,
            retain_intensities: false,
        };
        let result = bootstrap(&data.matrix, 3, &separable_estimator(), &options).unwrap();
        assert_eq!(result.summary.failed, 0);
        assert!(
            result.summary.phi_se.iter().all(|v| *v <= 0.01),
            "max se {}",
            result.summary.phi_se.iter().cloned().fold(0.0, f64::max)
        );
    }

    #[test]
    fn summary_is_invariant_to_replicate_order() {
        let data = generate(&SynthConfig::separable(600, 5, 3, 2)).unwrap();
        let options = BootstrapOptions {
            replicates: 6,
            seed: 1,
            retain_intensities: false,
        };
        let result = bootstrap(&data.matrix, 3, &separable_estimator(), &options).unwrap();
        let mut shuffled = result.runs.clone();
        shuffled.reverse();
        let summary = summarize_runs(&result.reference, &shuffled, 6, 0);
        for (a, b) in summary.phi_se.iter().zip(result.summary.phi_se.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    fn run_with_phi(replicate: usize, phi: Array2<f64>) -> BootstrapRun {
        let k = phi.nrows();
        BootstrapRun {
            replicate,
            indices: vec![],
            attribution: AttributionMatrix {
                phi,
                pollutant_names: vec!["A".into(), "B".into()],
                source_labels: (1..=k).map(|i| format!("S{i}")).collect(),
            },
            permutation: (0..k).collect(),
            intensities: None,
        }
    }

    #[test]
    fn rank_stability_matches_hand_enumeration() {
        // J = 2, K = 2, B = 2; one replicate flips pollutant A's top source.
        let run1 = run_with_phi(0, array![[0.6, 0.8], [0.4, 0.2]]);
        let run2 = run_with_phi(1, array![[0.4, 0.7], [0.6, 0.3]]);
        let runs = vec![run1, run2];
        let mut phi_mean = Array2::<f64>::zeros((2, 2));
        for run in &runs {
            phi_mean += &run.attribution.phi;
        }
        phi_mean.mapv_inplace(|v| v / 2.0);
        let summary = BootstrapSummary {
            phi_mean,
            phi_se: Array2::zeros((2, 2)),
            k: 2,
            replicates: 2,
            requested: 2,
            failed: 0,
            pollutant_names: vec!["A".into(), "B".into()],
        };
        let diag = diagnostics(&summary, &runs, 0.0).unwrap();
        assert_relative_eq!(diag.rank_stability, 0.75);
        assert_eq!(diag.per_pollutant_rank_stability, vec![0.5, 1.0]);
    }

    #[test]
    fn mean_floor_excludes_small_cells() {
        let runs = vec![
            run_with_phi(0, array![[0.98, 0.5], [0.02, 0.5]]),
            run_with_phi(1, array![[0.97, 0.7], [0.03, 0.3]]),
        ];
        let mut phi_mean = Array2::<f64>::zeros((2, 2));
        for run in &runs {
            phi_mean += &run.attribution.phi;
        }
        phi_mean.mapv_inplace(|v| v / 2.0);
        let mut phi_se = Array2::<f64>::zeros((2, 2));
        for run in &runs {
            for r in 0..2 {
                for c in 0..2 {
                    let d = run.attribution.phi[[r, c]] - phi_mean[[r, c]];
                    phi_se[[r, c]] += d * d;
                }
            }
        }
        phi_se.mapv_inplace(|v| v.sqrt()); // B - 1 = 1
        let summary = BootstrapSummary {
            phi_mean,
            phi_se,
            k: 2,
            replicates: 2,
            requested: 2,
            failed: 0,
            pollutant_names: vec!["A".into(), "B".into()],
        };
        let with_floor = diagnostics(&summary, &runs, 0.03).unwrap();
        let without_floor = diagnostics(&summary, &runs, 0.0).unwrap();
        // The excluded cell (mean 0.03-ish, high CV) can only lower the mean CV.
        assert_eq!(with_floor.excluded_cells, 1);
        assert_eq!(without_floor.excluded_cells, 0);
        assert!(with_floor.cvar <= without_floor.cvar);
        // A floor that excludes everything is an error.
        assert!(diagnostics(&summary, &runs, 2.0).is_err());
    }

    #[test]
    fn select_k_emits_one_row_per_candidate() {
        let data = generate(&SynthConfig::separable(400, 5, 3, 6)).unwrap();
        let options = BootstrapOptions {
            replicates: 2,
            seed: 3,
            retain_intensities: false,
        };
        let table = select_k(
            &data.matrix,
            &[2, 3],
            &separable_estimator(),
            &options,
            DEFAULT_MEAN_FLOOR,
        )
        .unwrap();
        assert_eq!(table.len(), 2);
        for row in &table {
            assert!(row.diagnostics.cvar >= 0.0);
            assert!((0.0..=1.0).contains(&row.diagnostics.rank_stability));
        }
        let single = select_k(
            &data.matrix,
            &[3],
            &separable_estimator(),
            &options,
            DEFAULT_MEAN_FLOOR,
        )
        .unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn replicates_below_two_are_rejected() {
        let data = generate(&SynthConfig::separable(100, 4, 2, 1)).unwrap();
        let options = BootstrapOptions {
            replicates: 1,
            seed: 0,
            retain_intensities: false,
        };
        assert!(bootstrap(&data.matrix, 2, &separable_estimator(), &options).is_err());
    }

    #[test]
    fn bootstrap_is_deterministic_and_retains_intensities_on_request() {
        let data = generate(&SynthConfig::separable(300, 4, 2, 12)).unwrap();
        let options = BootstrapOptions {
            replicates: 3,
            seed: 7,
            retain_intensities: true,
        };
        let a = bootstrap(&data.matrix, 2, &separable_estimator(), &options).unwrap();
        let b = bootstrap(&data.matrix, 2, &separable_estimator(), &options).unwrap();
        assert_eq!(a.summary.phi_mean, b.summary.phi_mean);
        assert_eq!(a.runs[0].indices, b.runs[0].indices);
        for run in &a.runs {
            let w = run.intensities.as_ref().expect("retained");
            assert_eq!(w.w_tilde.nrows(), 300);
        }
    }
}
