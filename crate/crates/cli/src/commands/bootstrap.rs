//! `bootstrap`: resample, refit, align, and summarize the attribution
//! matrix; reports the stability diagnostics and optionally archives each
//! replicate's aligned attribution.

use std::path::PathBuf;

use geonmf::resample::{bootstrap, diagnostics, BootstrapOptions};

use crate::common::{ensure_out_dir, EstimatorArgs, MatrixArgs};
use crate::manifest::ManifestBuilder;
use crate::tables::{fmt, write_csv};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub matrix: MatrixArgs,

    #[arg(long)]
    pub k: usize,

    /// Bootstrap replicates.
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub estimator: EstimatorArgs,

    /// Cells with bootstrap mean below this are excluded from CVar.
    #[arg(long, default_value_t = 0.03)]
    pub mean_floor: f64,

    /// Write each replicate's aligned attribution under replicates/.
    #[arg(long)]
    pub archive_replicates: bool,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut manifest = ManifestBuilder::new("bootstrap");
    ensure_out_dir(&args.out)?;
    args.matrix.record(&mut manifest)?;

    let (matrix, _) = args.matrix.load()?;
    let estimator = args.estimator.build()?;
    let options = BootstrapOptions {
        replicates: args.replicates,
        seed: args.seed,
        retain_intensities: false,
    };
    let result = bootstrap(&matrix, args.k, &estimator, &options)?;
    let diag = diagnostics(&result.summary, &result.runs, args.mean_floor)?;

    let mut header = vec!["source"];
    for name in &matrix.pollutant_names {
        header.push(name);
    }
    let matrix_rows = |values: &ndarray::Array2<f64>| -> Vec<Vec<String>> {
        (0..args.k)
            .map(|r| {
                let mut row = vec![result.reference.attribution.source_labels[r].clone()];
                for c in 0..matrix.npollutants() {
                    row.push(fmt(values[[r, c]]));
                }
                row
            })
            .collect()
    };
    write_csv(
        &args.out.join("phi_mean.csv"),
        &header,
        matrix_rows(&result.summary.phi_mean),
    )?;
    write_csv(
        &args.out.join("phi_se.csv"),
        &header,
        matrix_rows(&result.summary.phi_se),
    )?;
    write_csv(
        &args.out.join("diagnostics.csv"),
        &[
            "k",
            "replicates",
            "failed",
            "cvar",
            "rank_stability",
            "excluded_cells",
        ],
        [vec![
            args.k.to_string(),
            result.summary.replicates.to_string(),
            result.summary.failed.to_string(),
            fmt(diag.cvar),
            fmt(diag.rank_stability),
            diag.excluded_cells.to_string(),
        ]],
    )?;
    write_csv(
        &args.out.join("rank_stability.csv"),
        &["pollutant", "stability"],
        matrix
            .pollutant_names
            .iter()
            .zip(&diag.per_pollutant_rank_stability)
            .map(|(name, s)| vec![name.clone(), fmt(*s)]),
    )?;

    if args.archive_replicates {
        let dir = args.out.join("replicates");
        std::fs::create_dir_all(&dir)?;
        for run in &result.runs {
            write_csv(
                &dir.join(format!("replicate_{:04}.csv", run.replicate)),
                &header,
                matrix_rows(&run.attribution.phi),
            )?;
        }
    }

    manifest
        .param("k", args.k)
        .param("replicates", args.replicates)
        .param("seed", args.seed)
        .param("mean_floor", args.mean_floor)
        .param("archive_replicates", args.archive_replicates);
    args.estimator.describe(&mut manifest);
    manifest.write(&args.out)?;

    println!(
        "bootstrap: K={} B={} failed={} CVar={:.4} R={:.4}",
        args.k, args.replicates, result.summary.failed, diag.cvar, diag.rank_stability
    );
    Ok(())
}
