//! `regress`: bootstrap regressions of aligned source intensities (default)
//! or of one named column on covariate terms, with percentile confidence
//! intervals and main-effect-plus-interaction contrasts.

use std::path::PathBuf;

use anyhow::bail;
use geonmf::interpret::{regress_column, regress_sources, DesignSpec};
use geonmf::resample::{bootstrap, BootstrapOptions};

use crate::common::{comma_list, ensure_out_dir, EstimatorArgs, MatrixArgs};
use crate::manifest::ManifestBuilder;
use crate::tables::{fmt, write_csv};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub matrix: MatrixArgs,

    #[arg(long)]
    pub k: usize,

    #[arg(long, default_value_t = 100)]
    pub replicates: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub estimator: EstimatorArgs,

    /// Main-effect terms (covariate names, `location`, `am_pm`).
    #[arg(long)]
    pub terms: String,

    /// Interactions as A:B pairs, comma separated.
    #[arg(long)]
    pub interactions: Option<String>,

    /// Categorical encodings NAME=REFERENCE (repeatable).
    #[arg(long = "categorical")]
    pub categorical: Vec<String>,

    /// "sources" (every intensity column) or one column name.
    #[arg(long, default_value = "sources")]
    pub response: String,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut manifest = ManifestBuilder::new("regress");
    ensure_out_dir(&args.out)?;
    args.matrix.record(&mut manifest)?;

    let (matrix, _) = args.matrix.load()?;
    let estimator = args.estimator.build()?;

    let mut spec = DesignSpec {
        response: args.response.clone(),
        terms: comma_list(&args.terms),
        interactions: Vec::new(),
        categorical: Vec::new(),
    };
    if let Some(pairs) = &args.interactions {
        for pair in comma_list(pairs) {
            let Some((a, b)) = pair.split_once(':') else {
                bail!("interaction must look like A:B, got {pair:?}");
            };
            spec.interactions.push((a.to_string(), b.to_string()));
        }
    }
    for encoding in &args.categorical {
        let Some((name, reference)) = encoding.split_once('=') else {
            bail!("categorical must look like NAME=REFERENCE, got {encoding:?}");
        };
        spec = spec.with_categorical(name.trim(), reference.trim());
    }

    let options = BootstrapOptions {
        replicates: args.replicates,
        seed: args.seed,
        retain_intensities: args.response == "sources",
    };
    let boot = bootstrap(&matrix, args.k, &estimator, &options)?;

    let header = [
        "response",
        "coefficient",
        "point",
        "mean",
        "ci_lower",
        "ci_upper",
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut describe: Vec<(String, usize, usize, usize)> = Vec::new();
    if args.response == "sources" {
        let table = regress_sources(&matrix, &boot, &spec)?;
        for source in &table {
            for c in &source.result.coefficients {
                rows.push(vec![
                    source.result.response.clone(),
                    c.name.clone(),
                    fmt(c.point),
                    fmt(c.mean),
                    fmt(c.lower),
                    fmt(c.upper),
                ]);
            }
            describe.push((
                source.result.response.clone(),
                source.result.rows_used,
                source.result.replicates_used,
                source.result.replicates_failed,
            ));
        }
    } else {
        let result = regress_column(&matrix, &boot.runs, &spec)?;
        for c in &result.coefficients {
            rows.push(vec![
                result.response.clone(),
                c.name.clone(),
                fmt(c.point),
                fmt(c.mean),
                fmt(c.lower),
                fmt(c.upper),
            ]);
        }
        describe.push((
            result.response.clone(),
            result.rows_used,
            result.replicates_used,
            result.replicates_failed,
        ));
    }
    write_csv(&args.out.join("coefficients.csv"), &header, rows)?;
    write_csv(
        &args.out.join("regress_runs.csv"),
        &["response", "rows_used", "replicates_used", "replicates_failed"],
        describe.iter().map(|(name, rows, used, failed)| {
            vec![
                name.clone(),
                rows.to_string(),
                used.to_string(),
                failed.to_string(),
            ]
        }),
    )?;

    manifest
        .param("k", args.k)
        .param("replicates", args.replicates)
        .param("seed", args.seed)
        .param("terms", &spec.terms)
        .param("interactions", &args.interactions)
        .param("categorical", &args.categorical)
        .param("response", &args.response);
    args.estimator.describe(&mut manifest);
    manifest.write(&args.out)?;

    println!(
        "regress: {} responses, {} coefficients -> {}",
        describe.len(),
        header.len(),
        args.out.display()
    );
    Ok(())
}
