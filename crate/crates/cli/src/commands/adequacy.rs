//! `adequacy`: fit a model, then export the separability diagnostic and the
//! 2-D hull/profile projections for the requested pollutant pairs.

use std::path::PathBuf;

use anyhow::bail;
use geonmf::geometry::normalize_rows;
use geonmf::interpret::{hull_adequacy_export, separability_check, PointKind};

use crate::common::{comma_list, ensure_out_dir, EstimatorArgs, MatrixArgs};
use crate::manifest::ManifestBuilder;
use crate::tables::{fmt, write_csv};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub matrix: MatrixArgs,

    #[arg(long)]
    pub k: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub estimator: EstimatorArgs,

    /// Pollutant pairs A:B, comma separated (default: all pairs).
    #[arg(long)]
    pub pairs: Option<String>,

    /// Cloud subsample cap for the projections.
    #[arg(long, default_value_t = 2000)]
    pub cap: usize,

    /// Separability ratio window upper edge.
    #[arg(long, default_value_t = 0.2)]
    pub window: f64,

    /// Histogram bins over the window.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut manifest = ManifestBuilder::new("adequacy");
    ensure_out_dir(&args.out)?;
    args.matrix.record(&mut manifest)?;

    let (matrix, _) = args.matrix.load()?;
    let estimator = args.estimator.build()?;
    let model = estimator.fit(&matrix, args.k, args.seed)?;

    let report = separability_check(&model.intensities, args.window, args.bins)?;
    write_csv(
        &args.out.join("separability.csv"),
        &["source", "mass_near_zero", "rows", "dropped_zero_rows"],
        report.per_source.iter().map(|s| {
            vec![
                model.attribution.source_labels[s.source].clone(),
                fmt(s.mass_near_zero),
                report.rows.to_string(),
                report.dropped_zero_rows.to_string(),
            ]
        }),
    )?;
    let bin_width = report.window_hi / report.bins as f64;
    write_csv(
        &args.out.join("separability_hist.csv"),
        &["source", "bin_lo", "bin_hi", "count"],
        report.per_source.iter().flat_map(|s| {
            let label = model.attribution.source_labels[s.source].clone();
            s.histogram
                .iter()
                .enumerate()
                .map(move |(b, count)| {
                    vec![
                        label.clone(),
                        fmt(b as f64 * bin_width),
                        fmt((b + 1) as f64 * bin_width),
                        count.to_string(),
                    ]
                })
                .collect::<Vec<_>>()
        }),
    )?;

    let j = matrix.npollutants();
    let pairs: Vec<(usize, usize)> = match &args.pairs {
        Some(text) => {
            let mut out = Vec::new();
            for pair in comma_list(text) {
                let Some((a, b)) = pair.split_once(':') else {
                    bail!("pair must look like A:B, got {pair:?}");
                };
                let index = |name: &str| {
                    matrix
                        .pollutant_index(name)
                        .ok_or_else(|| anyhow::anyhow!("unknown pollutant {name:?}"))
                };
                out.push((index(a.trim())?, index(b.trim())?));
            }
            out
        }
        None => {
            let mut out = Vec::new();
            for a in 0..j {
                for b in (a + 1)..j {
                    out.push((a, b));
                }
            }
            out
        }
    };

    let cloud = normalize_rows(&matrix)?;
    let points = hull_adequacy_export(
        &cloud,
        &model.profiles,
        &matrix.pollutant_names,
        &pairs,
        args.cap,
        args.seed,
    )?;
    write_csv(
        &args.out.join("hull_points.csv"),
        &["pair_x", "pair_y", "kind", "index", "x", "y"],
        points.iter().map(|p| {
            vec![
                p.pair.0.clone(),
                p.pair.1.clone(),
                match p.kind {
                    PointKind::Cloud => "cloud".to_string(),
                    PointKind::Profile => "profile".to_string(),
                },
                p.index.to_string(),
                fmt(p.x),
                fmt(p.y),
            ]
        }),
    )?;

    manifest
        .param("k", args.k)
        .param("seed", args.seed)
        .param("pairs", &args.pairs)
        .param("cap", args.cap)
        .param("window", args.window)
        .param("bins", args.bins);
    args.estimator.describe(&mut manifest);
    manifest.write(&args.out)?;

    println!(
        "adequacy: {} pairs, {} projection points -> {}",
        pairs.len(),
        points.len(),
        args.out.display()
    );
    Ok(())
}
