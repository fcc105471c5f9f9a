//! Estimation layer: solve non-negative intensities against fixed profiles,
//! form the attribution matrix (per-pollutant source shares, columns summing
//! to one), and provide the alternating least-squares NMF baseline used for
//! sensitivity comparison.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    find_extreme_points, normalize_rows, prune_vertices, select_max_volume, xray_select,
    ExtremeMethod, ProfileMatrix, SubsetStrategy, DEFAULT_LP_TOL, DEFAULT_RANDOM_DIRECTIONS,
};
use crate::ingest::PollutantMatrix;
use crate::numeric::nnls::{nnls_gram, NnlsSolution};

/// Non-negative source intensities for each observation row.
#[derive(Debug, Clone)]
pub struct IntensityMatrix {
    /// n x K, entries >= 0.
    pub w_tilde: Array2<f64>,
    /// Per-row reconstruction residual (Euclidean norm).
    pub residual_norm: Vec<f64>,
    /// Column means of `w_tilde` (the mu weights of the attribution).
    pub column_means: Vec<f64>,
}

impl IntensityMatrix {
    fn from_solutions(w_tilde: Array2<f64>, residual_norm: Vec<f64>) -> IntensityMatrix {
        let n = w_tilde.nrows().max(1) as f64;
        let column_means = w_tilde
            .columns()
            .into_iter()
            .map(|c| c.sum() / n)
            .collect();
        IntensityMatrix {
            w_tilde,
            residual_norm,
            column_means,
        }
    }
}

/// K x J attribution matrix: `phi[k][j]` is the fraction of pollutant `j`
/// attributable to source `k`; every column sums to one.
#[derive(Debug, Clone)]
pub struct AttributionMatrix {
    pub phi: Array2<f64>,
    pub pollutant_names: Vec<String>,
    pub source_labels: Vec<String>,
}

impl AttributionMatrix {
    /// Top source per pollutant (ties to the smaller source index).
    pub fn top_sources(&self) -> Vec<usize> {
        (0..self.phi.ncols())
            .map(|j| {
                let mut best = 0usize;
                for k in 1..self.phi.nrows() {
                    if self.phi[[k, j]] > self.phi[[best, j]] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Row-normalized intensity matrix W*; all-zero rows are excluded.
#[derive(Debug, Clone)]
pub struct NormalizedIntensity {
    pub w_star: Array2<f64>,
    pub dropped_zero_rows: Vec<usize>,
}

/// Which estimator produced a [`SourceModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    Geometric,
    Xray,
    LsNmf,
}

impl FitKind {
    pub fn name(&self) -> &'static str {
        match self {
            FitKind::Geometric => "geometric",
            FitKind::Xray => "xray",
            FitKind::LsNmf => "lsnmf",
        }
    }
}

/// A complete fit: profiles, intensities, and the attribution matrix, with
/// sources ordered by descending mean intensity.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub profiles: ProfileMatrix,
    pub intensities: IntensityMatrix,
    pub attribution: AttributionMatrix,
    pub k: usize,
    pub method: FitKind,
    /// Always true for the geometric and XRAY paths; reports outer-loop
    /// convergence for the alternating least-squares baseline.
    pub converged: bool,
}

/// How the hull vertices are identified inside [`fit_geometric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    /// Exact LP certificates up to `exact_lp_max_rows` rows, then the screen.
    Auto,
    ExactLp,
    Screen,
}

/// Options of the geometric fit. Defaults follow the pipeline defaults:
/// automatic method choice, 256 random screen directions, LP tolerance
/// 1e-8, automatic subset strategy, pruning multiplier 40.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub seed: u64,
    pub method: MethodChoice,
    pub random_directions: usize,
    pub lp_tol: f64,
    pub strategy: SubsetStrategy,
    /// Auto switches from exact LP to the screen above this row count.
    pub exact_lp_max_rows: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            seed: 0,
            method: MethodChoice::Auto,
            random_directions: DEFAULT_RANDOM_DIRECTIONS,
            lp_tol: DEFAULT_LP_TOL,
            strategy: SubsetStrategy::Auto,
            exact_lp_max_rows: 2000,
        }
    }
}

/// Solve `w_i = argmin_{w >= 0} || y_i - w H* ||_2` per row by the
/// active-set method (iteration cap `10 K`), recording per-row residuals
/// and column means.
pub fn solve_intensities(
    matrix: &PollutantMatrix,
    profiles: &ProfileMatrix,
) -> Result<IntensityMatrix> {
    let k = profiles.k();
    let j = profiles.h_star.ncols();
    if matrix.npollutants() != j {
        return Err(Error::Invalid(format!(
            "matrix has {} pollutants, profiles have {j}",
            matrix.npollutants()
        )));
    }
    let n = matrix.nrows();
    let h = &profiles.h_star;
    let ata = h.dot(&h.t());
    let max_iter = 10 * k;

    let solutions: Vec<NnlsSolution> = (0..n)
        .into_par_iter()
        .map(|i| {
            let y = matrix.values.row(i);
            let atb: Vec<f64> = (0..k).map(|r| h.row(r).dot(&y)).collect();
            let btb = y.dot(&y);
            nnls_gram(ata.view(), &atb, btb, max_iter)
        })
        .collect();

    if let Some(row) = solutions.iter().position(|s| !s.converged) {
        return Err(Error::NnlsNonConvergence {
            row,
            iterations: max_iter,
        });
    }

    let mut w_tilde = Array2::zeros((n, k));
    let mut residual_norm = Vec::with_capacity(n);
    for (i, sol) in solutions.into_iter().enumerate() {
        for (c, v) in sol.x.into_iter().enumerate() {
            w_tilde[[i, c]] = v;
        }
        residual_norm.push(sol.residual_sq.sqrt());
    }
    Ok(IntensityMatrix::from_solutions(w_tilde, residual_norm))
}

/// Attribution shares `phi[k][j] = mu_k H[k][j] / sum_l mu_l H[l][j]`.
pub fn compute_attribution(
    intensities: &IntensityMatrix,
    profiles: &ProfileMatrix,
    pollutant_names: &[String],
) -> Result<AttributionMatrix> {
    let k = profiles.k();
    let j = profiles.h_star.ncols();
    let mu = &intensities.column_means;
    let mut phi = Array2::zeros((k, j));
    for col in 0..j {
        let denom: f64 = (0..k).map(|r| mu[r] * profiles.h_star[[r, col]]).sum();
        if !(denom > 0.0) {
            let name = pollutant_names
                .get(col)
                .cloned()
                .unwrap_or_else(|| format!("column {col}"));
            return Err(Error::ZeroAttribution(name));
        }
        for r in 0..k {
            phi[[r, col]] = (mu[r] * profiles.h_star[[r, col]] / denom).clamp(0.0, 1.0);
        }
    }
    Ok(AttributionMatrix {
        phi,
        pollutant_names: pollutant_names.to_vec(),
        source_labels: (1..=k).map(|i| format!("S{i}")).collect(),
    })
}

/// Row-normalize intensities to W*; all-zero rows are dropped and recorded.
pub fn normalize_intensity(intensities: &IntensityMatrix) -> Result<NormalizedIntensity> {
    let (n, k) = intensities.w_tilde.dim();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..n {
        let sum: f64 = intensities.w_tilde.row(i).sum();
        if sum > 0.0 {
            kept.push((i, sum));
        } else {
            dropped.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::Invalid("all intensity rows are zero".into()));
    }
    let mut w_star = Array2::zeros((kept.len(), k));
    for (out, (i, sum)) in kept.iter().enumerate() {
        for c in 0..k {
            w_star[[out, c]] = intensities.w_tilde[[*i, c]] / sum;
        }
    }
    Ok(NormalizedIntensity {
        w_star,
        dropped_zero_rows: dropped,
    })
}

/// Reorder sources by descending mean intensity (ties: first pollutant
/// share, then index), permuting profiles, intensity columns, and mu
/// consistently. Returns the applied permutation.
fn order_sources(profiles: &mut ProfileMatrix, intensities: &mut IntensityMatrix) -> Vec<usize> {
    let k = profiles.k();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        intensities.column_means[b]
            .total_cmp(&intensities.column_means[a])
            .then(profiles.h_star[[b, 0]].total_cmp(&profiles.h_star[[a, 0]]))
            .then(a.cmp(&b))
    });

    let j = profiles.h_star.ncols();
    let h = Array2::from_shape_fn((k, j), |(r, c)| profiles.h_star[[order[r], c]]);
    let rows = if profiles.cloud_rows.len() == k {
        order.iter().map(|&r| profiles.cloud_rows[r]).collect()
    } else {
        profiles.cloud_rows.clone()
    };
    profiles.h_star = h;
    profiles.cloud_rows = rows;

    let n = intensities.w_tilde.nrows();
    let w = Array2::from_shape_fn((n, k), |(i, c)| intensities.w_tilde[[i, order[c]]]);
    intensities.w_tilde = w;
    intensities.column_means = order.iter().map(|&r| intensities.column_means[r]).collect();
    order
}

fn assemble_model(
    matrix: &PollutantMatrix,
    mut profiles: ProfileMatrix,
    method: FitKind,
    converged: bool,
) -> Result<SourceModel> {
    let mut intensities = solve_intensities(matrix, &profiles)?;
    order_sources(&mut profiles, &mut intensities);
    let attribution = compute_attribution(&intensities, &profiles, &matrix.pollutant_names)?;
    Ok(SourceModel {
        k: profiles.k(),
        profiles,
        intensities,
        attribution,
        method,
        converged,
    })
}

/// Full geometric pipeline: row-normalize, identify hull vertices, prune to
/// `N0 = 40K` candidates, select the max-volume K-subset, solve intensities,
/// and form the attribution. Deterministic given `(matrix, K, options.seed)`.
pub fn fit_geometric(matrix: &PollutantMatrix, k: usize, options: &FitOptions) -> Result<SourceModel> {
    validate_k(matrix, k)?;
    let cloud = normalize_rows(matrix)?;
    let method = match options.method {
        MethodChoice::ExactLp => ExtremeMethod::ExactLp,
        MethodChoice::Screen => ExtremeMethod::Screen {
            random_directions: options.random_directions,
            seed: options.seed,
        },
        MethodChoice::Auto => {
            if cloud.points.nrows() <= options.exact_lp_max_rows {
                ExtremeMethod::ExactLp
            } else {
                ExtremeMethod::Screen {
                    random_directions: options.random_directions,
                    seed: options.seed,
                }
            }
        }
    };
    let vset = find_extreme_points(&cloud, &method, options.lp_tol)?;
    let vset = prune_vertices(&vset, &cloud, k, options.seed);
    let profiles = select_max_volume(&vset, &cloud, k, options.strategy)?;
    assemble_model(matrix, profiles, FitKind::Geometric, true)
}

/// XRAY pipeline: greedy conical-hull expansion instead of max-volume
/// subset selection. Deterministic (ties resolve to the smallest row).
pub fn fit_xray(matrix: &PollutantMatrix, k: usize) -> Result<SourceModel> {
    validate_k(matrix, k)?;
    let cloud = normalize_rows(matrix)?;
    let profiles = xray_select(&cloud, k)?;
    assemble_model(matrix, profiles, FitKind::Xray, true)
}

fn validate_k(matrix: &PollutantMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Invalid("K must be at least 1".into()));
    }
    if k > matrix.npollutants() {
        return Err(Error::Invalid(format!(
            "K={k} exceeds the number of pollutants ({})",
            matrix.npollutants()
        )));
    }
    Ok(())
}

/// Relative objective decrease below which the alternating solve stops.
const LS_NMF_REL_TOL: f64 = 1e-6;
const LS_NMF_MAX_SWEEPS: usize = 200;

/// Alternating non-negative least squares for
/// `|| Y - W H ||_F^2 + alpha (||W||_F^2 + ||H||_F^2)`, seeded uniform
/// initialization scaled to the data magnitude. Non-convergence within the
/// sweep cap is reported through the model's `converged` flag, not an error.
pub fn ls_nmf(
    matrix: &PollutantMatrix,
    k: usize,
    l2_penalty: f64,
    seed: u64,
) -> Result<SourceModel> {
    validate_k(matrix, k)?;
    if l2_penalty < 0.0 {
        return Err(Error::Invalid("l2_penalty must be non-negative".into()));
    }
    let (n, j) = matrix.values.dim();
    let y = &matrix.values;

    let mean = y.sum() / (n * j) as f64;
    let scale = (mean.max(1e-12) / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::from_shape_fn((n, k), |_| rng.random::<f64>() * scale);
    let mut h = Array2::from_shape_fn((k, j), |_| rng.random::<f64>() * scale);

    let alpha = l2_penalty;
    let max_iter = 10 * k;
    let objective = |w: &Array2<f64>, h: &Array2<f64>| -> f64 {
        let recon = w.dot(h);
        let mut obj = 0.0;
        for (a, b) in recon.iter().zip(y.iter()) {
            obj += (a - b) * (a - b);
        }
        obj + alpha * (w.iter().map(|v| v * v).sum::<f64>() + h.iter().map(|v| v * v).sum::<f64>())
    };

    let mut prev_obj = f64::INFINITY;
    let mut converged = false;
    for _sweep in 0..LS_NMF_MAX_SWEEPS {
        // W rows against fixed H (ridge folds into the Gram diagonal).
        let mut ata = h.dot(&h.t());
        for d in 0..k {
            ata[[d, d]] += alpha;
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let yi = y.row(i);
                let atb: Vec<f64> = (0..k).map(|r| h.row(r).dot(&yi)).collect();
                nnls_gram(ata.view(), &atb, yi.dot(&yi), max_iter).x
            })
            .collect();
        for (i, row) in rows.into_iter().enumerate() {
            for (c, v) in row.into_iter().enumerate() {
                w[[i, c]] = v;
            }
        }

        // H columns against fixed W.
        let mut wtw = w.t().dot(&w);
        for d in 0..k {
            wtw[[d, d]] += alpha;
        }
        let cols: Vec<Vec<f64>> = (0..j)
            .into_par_iter()
            .map(|c| {
                let yc = y.column(c);
                let atb: Vec<f64> = (0..k).map(|r| w.column(r).dot(&yc)).collect();
                nnls_gram(wtw.view(), &atb, yc.dot(&yc), max_iter).x
            })
            .collect();
        for (c, col) in cols.into_iter().enumerate() {
            for (r, v) in col.into_iter().enumerate() {
                h[[r, c]] = v;
            }
        }

        let obj = objective(&w, &h);
        if prev_obj.is_finite() && prev_obj - obj < LS_NMF_REL_TOL * prev_obj.max(1e-30) {
            converged = true;
            break;
        }
        prev_obj = obj;
    }

    // Fold profile row sums into the intensities so profiles are
    // row-stochastic; the attribution is invariant to this rescaling.
    let row_sums: Vec<f64> = h.rows().into_iter().map(|r| r.sum()).collect();
    if row_sums.iter().any(|s| *s <= 1e-12) {
        return Err(Error::Invalid(
            "ls_nmf produced a degenerate (all-zero) source profile".into(),
        ));
    }
    let mut h_star = h.clone();
    for (mut row, &s) in h_star.rows_mut().into_iter().zip(&row_sums) {
        row.mapv_inplace(|v| v / s);
    }
    let mut w_tilde = w.clone();
    for i in 0..n {
        for c in 0..k {
            w_tilde[[i, c]] *= row_sums[c];
        }
    }

    let mut profiles = ProfileMatrix::new(h_star, Vec::new())?;
    let residual_norm: Vec<f64> = {
        let recon = w_tilde.dot(&profiles.h_star);
        (0..n)
            .map(|i| {
                (0..j)
                    .map(|c| (recon[[i, c]] - y[[i, c]]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    };
    let mut intensities = IntensityMatrix::from_solutions(w_tilde, residual_norm);
    order_sources(&mut profiles, &mut intensities);
    let attribution = compute_attribution(&intensities, &profiles, &matrix.pollutant_names)?;
    Ok(SourceModel {
        k,
        profiles,
        intensities,
        attribution,
        method: FitKind::LsNmf,
        converged,
    })
}

/// Estimator selector used by bootstrap and the CLI.
#[derive(Debug, Clone)]
pub enum Estimator {
    Geometric(FitOptions),
    Xray,
    LsNmf { l2_penalty: f64 },
}

impl Estimator {
    /// Fit with the given seed overriding any seed in the options; the XRAY
    /// path has no stochastic component.
    pub fn fit(&self, matrix: &PollutantMatrix, k: usize, seed: u64) -> Result<SourceModel> {
        match self {
            Estimator::Geometric(options) => {
                let mut options = options.clone();
                options.seed = seed;
                fit_geometric(matrix, k, &options)
            }
            Estimator::Xray => fit_xray(matrix, k),
            Estimator::LsNmf { l2_penalty } => ls_nmf(matrix, k, *l2_penalty, seed),
        }
    }

    pub fn kind(&self) -> FitKind {
        match self {
            Estimator::Geometric(_) => FitKind::Geometric,
            Estimator::Xray => FitKind::Xray,
            Estimator::LsNmf { .. } => FitKind::LsNmf,
        }
    }
}
