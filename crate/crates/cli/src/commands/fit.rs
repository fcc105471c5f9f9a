//! `fit`: one source-model fit with the chosen estimator; writes profiles,
//! attribution, an intensity preview (full matrix on request), and model
//! metadata.

use std::path::PathBuf;

use geonmf::ingest::TIMESTAMP_FORMAT;
use serde_json::json;

use crate::common::{ensure_out_dir, EstimatorArgs, MatrixArgs};
use crate::manifest::ManifestBuilder;
use crate::tables::{fmt, write_csv};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub matrix: MatrixArgs,

    /// Number of sources.
    #[arg(long)]
    pub k: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub estimator: EstimatorArgs,

    /// Also write the full intensity matrix (can be large).
    #[arg(long)]
    pub full_intensities: bool,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut manifest = ManifestBuilder::new("fit");
    ensure_out_dir(&args.out)?;
    args.matrix.record(&mut manifest)?;

    let (matrix, _) = args.matrix.load()?;
    let estimator = args.estimator.build()?;
    let model = estimator.fit(&matrix, args.k, args.seed)?;

    let mut profile_header = vec!["source"];
    for name in &matrix.pollutant_names {
        profile_header.push(name);
    }
    let source_rows = |values: &ndarray::Array2<f64>| -> Vec<Vec<String>> {
        (0..model.k)
            .map(|r| {
                let mut row = vec![model.attribution.source_labels[r].clone()];
                for c in 0..matrix.npollutants() {
                    row.push(fmt(values[[r, c]]));
                }
                row
            })
            .collect()
    };
    write_csv(
        &args.out.join("profiles.csv"),
        &profile_header,
        source_rows(&model.profiles.h_star),
    )?;
    write_csv(
        &args.out.join("attribution.csv"),
        &profile_header,
        source_rows(&model.attribution.phi),
    )?;

    let intensity_rows = |limit: usize| -> Vec<Vec<String>> {
        (0..matrix.nrows().min(limit))
            .map(|i| {
                let mut row = vec![
                    matrix.timestamps[i].format(TIMESTAMP_FORMAT).to_string(),
                    matrix.locations[i].clone(),
                ];
                for c in 0..model.k {
                    row.push(fmt(model.intensities.w_tilde[[i, c]]));
                }
                row.push(fmt(model.intensities.residual_norm[i]));
                row
            })
            .collect()
    };
    let mut intensity_header = vec!["timestamp".to_string(), "location".to_string()];
    intensity_header.extend(model.attribution.source_labels.iter().cloned());
    intensity_header.push("residual".into());
    let header_refs: Vec<&str> = intensity_header.iter().map(String::as_str).collect();
    write_csv(
        &args.out.join("intensities_head.csv"),
        &header_refs,
        intensity_rows(1000),
    )?;
    if args.full_intensities {
        write_csv(
            &args.out.join("intensities.csv"),
            &header_refs,
            intensity_rows(usize::MAX),
        )?;
    }

    let residual_mean = model.intensities.residual_norm.iter().sum::<f64>()
        / matrix.nrows().max(1) as f64;
    let residual_max = model
        .intensities
        .residual_norm
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let meta = json!({
        "k": model.k,
        "seed": args.seed,
        "strategy": model.method.name(),
        "converged": model.converged,
        "column_means": model.intensities.column_means,
        "residual_norm_mean": residual_mean,
        "residual_norm_max": residual_max,
    });
    std::fs::write(
        args.out.join("model.meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;

    manifest.param("k", args.k).param("seed", args.seed);
    manifest.param("full_intensities", args.full_intensities);
    args.estimator.describe(&mut manifest);
    manifest.write(&args.out)?;

    println!(
        "fit: {} K={} converged={} -> {}",
        model.method.name(),
        model.k,
        model.converged,
        args.out.display()
    );
    Ok(())
}
