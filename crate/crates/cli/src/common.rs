//! Shared flag groups and loading helpers for the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use geonmf::apportion::{Estimator, FitOptions, MethodChoice};
use geonmf::geometry::SubsetStrategy;
use geonmf::ingest::{read_matrix, MatrixMetadata, PollutantMatrix};

/// Estimator selection shared by fit-like commands.
#[derive(clap::Args, Clone, Debug)]
pub struct EstimatorArgs {
    /// Fit strategy: geometric | xray | lsnmf.
    #[arg(long, default_value = "geometric")]
    pub strategy: String,

    /// L2 penalty for the lsnmf strategy.
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,

    /// Hull-vertex method for the geometric strategy: auto | exact-lp | screen.
    #[arg(long, default_value = "auto")]
    pub method: String,

    /// Random directions in the screening bank.
    #[arg(long, default_value_t = 256)]
    pub directions: usize,

    /// Max-volume subset search: auto | exhaustive | greedy-swap.
    #[arg(long, default_value = "auto")]
    pub subset: String,
}

impl EstimatorArgs {
    pub fn build(&self) -> anyhow::Result<Estimator> {
        let method = match self.method.as_str() {
            "auto" => MethodChoice::Auto,
            "exact-lp" => MethodChoice::ExactLp,
            "screen" => MethodChoice::Screen,
            other => bail!("unknown --method {other:?}"),
        };
        let strategy = match self.subset.as_str() {
            "auto" => SubsetStrategy::Auto,
            "exhaustive" => SubsetStrategy::Exhaustive,
            "greedy-swap" => SubsetStrategy::GreedySwap,
            other => bail!("unknown --subset {other:?}"),
        };
        match self.strategy.as_str() {
            "geometric" => Ok(Estimator::Geometric(FitOptions {
                method,
                random_directions: self.directions,
                strategy,
                ..FitOptions::default()
            })),
            "xray" => Ok(Estimator::Xray),
            "lsnmf" => Ok(Estimator::LsNmf {
                l2_penalty: self.l2,
            }),
            other => bail!("unknown --strategy {other:?}"),
        }
    }

    pub fn describe(&self, manifest: &mut crate::manifest::ManifestBuilder) {
        manifest.param("strategy", &self.strategy);
        manifest.param("l2", self.l2);
        manifest.param("method", &self.method);
        manifest.param("directions", self.directions);
        manifest.param("subset", &self.subset);
    }
}

/// Matrix input pair shared by analysis commands.
#[derive(clap::Args, Clone, Debug)]
pub struct MatrixArgs {
    /// Matrix file written by `preprocess` or `simulate`.
    #[arg(long)]
    pub matrix: PathBuf,

    /// Sidecar metadata; defaults to the matrix path with `.meta.json`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

impl MatrixArgs {
    pub fn meta_path(&self) -> PathBuf {
        match &self.meta {
            Some(path) => path.clone(),
            None => self.matrix.with_extension("meta.json"),
        }
    }

    pub fn load(&self) -> anyhow::Result<(PollutantMatrix, MatrixMetadata)> {
        let meta_path = self.meta_path();
        let meta = MatrixMetadata::read(&meta_path)
            .with_context(|| format!("cannot load metadata {}", meta_path.display()))?;
        let matrix = read_matrix(&self.matrix, &meta)
            .with_context(|| format!("cannot load matrix {}", self.matrix.display()))?;
        Ok((matrix, meta))
    }

    pub fn record(
        &self,
        manifest: &mut crate::manifest::ManifestBuilder,
    ) -> anyhow::Result<()> {
        manifest.input(&self.matrix)?;
        manifest.input(&self.meta_path())?;
        Ok(())
    }
}

pub fn ensure_out_dir(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
}

/// Parse a comma-separated list, trimming blanks.
pub fn comma_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}
