//! `select-k`: bootstrap stability diagnostics across candidate source
//! counts. Emits the table only; the criteria are weighed by the analyst.

use std::path::PathBuf;

use anyhow::Context;
use geonmf::resample::{select_k, BootstrapOptions};

use crate::common::{comma_list, ensure_out_dir, EstimatorArgs, MatrixArgs};
use crate::manifest::ManifestBuilder;
use crate::tables::{fmt, write_csv};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub matrix: MatrixArgs,

    /// Candidate source counts.
    #[arg(long, default_value = "2,3,4,5")]
    pub k_values: String,

    #[arg(long, default_value_t = 100)]
    pub replicates: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub estimator: EstimatorArgs,

    #[arg(long, default_value_t = 0.03)]
    pub mean_floor: f64,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut manifest = ManifestBuilder::new("select-k");
    ensure_out_dir(&args.out)?;
    args.matrix.record(&mut manifest)?;

    let k_values: Vec<usize> = comma_list(&args.k_values)
        .iter()
        .map(|s| s.parse().with_context(|| format!("bad K value {s:?}")))
        .collect::<anyhow::Result<_>>()?;

    let (matrix, _) = args.matrix.load()?;
    let estimator = args.estimator.build()?;
    let options = BootstrapOptions {
        replicates: args.replicates,
        seed: args.seed,
        retain_intensities: false,
    };
    let table = select_k(&matrix, &k_values, &estimator, &options, args.mean_floor)?;

    write_csv(
        &args.out.join("kselect.csv"),
        &[
            "k",
            "cvar",
            "rank_stability",
            "excluded_cells",
            "failed_replicates",
        ],
        table.iter().map(|row| {
            vec![
                row.k.to_string(),
                fmt(row.diagnostics.cvar),
                fmt(row.diagnostics.rank_stability),
                row.diagnostics.excluded_cells.to_string(),
                row.failed_replicates.to_string(),
            ]
        }),
    )?;

    manifest
        .param("k_values", &k_values)
        .param("replicates", args.replicates)
        .param("seed", args.seed)
        .param("mean_floor", args.mean_floor);
    args.estimator.describe(&mut manifest);
    manifest.write(&args.out)?;

    for row in &table {
        println!(
            "select-k: K={} CVar={:.4} R={:.4}",
            row.k, row.diagnostics.cvar, row.diagnostics.rank_stability
        );
    }
    Ok(())
}
