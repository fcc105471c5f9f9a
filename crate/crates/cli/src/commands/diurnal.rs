//! `diurnal`: hour-of-day means of a pollutant/covariate column or of a
//! fitted source-intensity column, optionally split weekday/weekend.

use std::path::PathBuf;

use anyhow::bail;
use geonmf::interpret::diurnal;

use crate::common::{ensure_out_dir, EstimatorArgs, MatrixArgs};
use crate::manifest::ManifestBuilder;
use crate::tables::{fmt_opt, write_csv};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub matrix: MatrixArgs,

    /// Pollutant or covariate column to average.
    #[arg(long, conflicts_with = "source")]
    pub column: Option<String>,

    /// 1-based source index; fits a model and averages its intensity.
    #[arg(long)]
    pub source: Option<usize>,

    /// Sources for the fit when --source is used.
    #[arg(long)]
    pub k: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub estimator: EstimatorArgs,

    /// Split into weekday/weekend groups.
    #[arg(long)]
    pub weekend_split: bool,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut manifest = ManifestBuilder::new("diurnal");
    ensure_out_dir(&args.out)?;
    args.matrix.record(&mut manifest)?;

    let (matrix, _) = args.matrix.load()?;

    let (label, timestamps, values): (String, Vec<_>, Vec<f64>) = match (&args.column, args.source)
    {
        (Some(column), None) => {
            if let Some(j) = matrix.pollutant_index(column) {
                (
                    column.clone(),
                    matrix.timestamps.clone(),
                    matrix.values.column(j).to_vec(),
                )
            } else if let Some(c) = matrix.covariate_index(column) {
                let mut ts = Vec::new();
                let mut vs = Vec::new();
                for (i, v) in matrix.covariates[c].iter().enumerate() {
                    if let Some(v) = v {
                        ts.push(matrix.timestamps[i]);
                        vs.push(*v);
                    }
                }
                (column.clone(), ts, vs)
            } else {
                bail!("column {column:?} not found among pollutants or covariates");
            }
        }
        (None, Some(source)) => {
            let Some(k) = args.k else {
                bail!("--source requires --k");
            };
            if source == 0 || source > k {
                bail!("--source must be in 1..={k}");
            }
            let estimator = args.estimator.build()?;
            let model = estimator.fit(&matrix, k, args.seed)?;
            (
                format!("source_{source}"),
                matrix.timestamps.clone(),
                model.intensities.w_tilde.column(source - 1).to_vec(),
            )
        }
        _ => bail!("give exactly one of --column or --source"),
    };

    let cells = diurnal(&timestamps, &values, args.weekend_split)?;
    write_csv(
        &args.out.join("diurnal.csv"),
        &["value", "group", "hour", "mean", "count"],
        cells.iter().map(|cell| {
            vec![
                label.clone(),
                cell.group.unwrap_or("all").to_string(),
                cell.hour.to_string(),
                fmt_opt(cell.mean),
                cell.count.to_string(),
            ]
        }),
    )?;

    manifest
        .param("column", &args.column)
        .param("source", &args.source)
        .param("k", &args.k)
        .param("seed", args.seed)
        .param("weekend_split", args.weekend_split);
    args.estimator.describe(&mut manifest);
    manifest.write(&args.out)?;

    println!("diurnal: {label} -> {}", args.out.display());
    Ok(())
}
