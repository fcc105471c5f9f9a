//! Source apportionment of multi-pollutant sensor time series via
//! identifiable geometric non-negative matrix factorization.
//!
//! The pipeline estimates, for `K` latent sources, the attribution matrix
//! `Φ` whose entry `φ_kj` is the fraction of pollutant `j` attributable to
//! source `k` (columns sum to one). Unlike the individual NMF factors, `Φ`
//! is identifiable under a probabilistic separability condition and is
//! invariant to pollutant-specific unit changes.
//!
//! Modules follow the pipeline order:
//!
//! - [`ingest`]: parsing, PM size-bin differencing, complete-case filtering,
//!   and the offset/quantile scaling transform.
//! - [`geometry`]: row normalization, convex-hull vertex identification,
//!   k-means pruning, and max-volume / XRAY vertex selection.
//! - [`apportion`]: constrained intensity solve, attribution matrix, and the
//!   least-squares NMF baseline.
//! - [`resample`]: bootstrap uncertainty, source alignment, and the
//!   stability diagnostics used to choose `K`.
//! - [`interpret`]: regressions, diurnal profiles, one-sided MW/KS incident
//!   tests, correlations, and model-adequacy exports.
//! - [`synth`]: seeded ground-truth generators used as verification oracles.

pub mod apportion;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod interpret;
pub mod numeric;
pub mod resample;
pub mod synth;

pub use error::{Error, Result};
