//! Downstream analyses tying sources to covariates: OLS regression with
//! bootstrap confidence intervals, diurnal profiles, one-sided MW/KS
//! incident tests, the pollutant correlation matrix, and the geometric
//! model-adequacy exports. Everything emits plot-ready tables; no plotting.

mod adequacy;
mod case_study;
mod diurnal;
mod regression;

pub use adequacy::{
    hull_adequacy_export, separability_check, HullPoint, PointKind, SeparabilityReport,
    SourceSeparability, SEPARABILITY_WINDOW,
};
pub use case_study::{case_study, CaseStudyEntry, CaseStudyOptions, CaseSummary};
pub use diurnal::{diurnal, DiurnalCell};
pub use rank_tests::{ks_one_sided, mann_whitney_one_sided, TestReport};
pub use regression::{
    fit_ols, regress_column, regress_sources, CategoricalTerm, CoefficientSummary, Column,
    DesignSpec, Frame, OlsFit, RegressionResult, SourceRegression,
};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::PollutantMatrix;

/// J x J Pearson correlation matrix; entries involving a zero-variance
/// column are NaN (undefined), all others have unit diagonal.
pub fn correlations(matrix: &PollutantMatrix) -> Result<Array2<f64>> {
    let (n, j) = matrix.values.dim();
    if n < 2 {
        return Err(Error::Invalid("correlations need at least 2 rows".into()));
    }
    let means: Vec<f64> = (0..j).map(|c| matrix.values.column(c).sum() / n as f64).collect();
    let mut centered = matrix.values.clone();
    for c in 0..j {
        for v in centered.column_mut(c).iter_mut() {
            *v -= means[c];
        }
    }
    let norms: Vec<f64> = (0..j)
        .map(|c| centered.column(c).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut out = Array2::from_elem((j, j), f64::NAN);
    for a in 0..j {
        for b in a..j {
            if norms[a] > 0.0 && norms[b] > 0.0 {
                let dot: f64 = centered.column(a).dot(&centered.column(b));
                let r = (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0);
                out[[a, b]] = r;
                out[[b, a]] = r;
            }
        }
    }
    Ok(out)
}
