//! `preprocess`: parse a raw delimited sensor table, derive PM size bins,
//! apply complete-case and outlier filtering, fit and apply the scaling
//! transform, and write the matrix + metadata + summary.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use geonmf::ingest::{
    apply_scaling, derive_size_bins, filter_complete, fit_scaling, parse_table, summarize_matrix,
    write_matrix, MatrixMetadata, Schema, PM_CUMULATIVE,
};

use crate::common::{comma_list, ensure_out_dir};
use crate::manifest::ManifestBuilder;
use crate::tables::{fmt, write_csv};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Raw delimited input table (header row required).
    #[arg(long)]
    pub input: PathBuf,

    /// Column-mapping config of key=value lines.
    #[arg(long)]
    pub schema: Option<PathBuf>,

    /// Extra mapping lines, e.g. --map pollutant.PM1=pm1_ugm3 (repeatable).
    #[arg(long = "map")]
    pub map: Vec<String>,

    /// Pollutants required for the complete-case filter (default: all).
    #[arg(long)]
    pub required: Option<String>,

    /// Outlier rule NAME<THRESHOLD: rows with value >= threshold drop
    /// (repeatable).
    #[arg(long = "outlier")]
    pub outliers: Vec<String>,

    /// Derive PM size bins: auto | on | off.
    #[arg(long, default_value = "auto")]
    pub size_bins: String,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut manifest = ManifestBuilder::new("preprocess");
    ensure_out_dir(&args.out)?;

    let mut schema_text = String::new();
    if let Some(path) = &args.schema {
        schema_text = fs::read_to_string(path)
            .with_context(|| format!("cannot read schema {}", path.display()))?;
        manifest.input(path)?;
    }
    for line in &args.map {
        schema_text.push('\n');
        schema_text.push_str(line);
    }
    let schema = Schema::from_key_value(&schema_text)?;
    manifest.input(&args.input)?;

    let table = parse_table(&args.input, &schema)?;
    let rows_parsed = table.records.len();

    let want_bins = match args.size_bins.as_str() {
        "on" => true,
        "off" => false,
        "auto" => PM_CUMULATIVE
            .iter()
            .all(|name| table.pollutant_names.iter().any(|n| n == name)),
        other => bail!("unknown --size-bins {other:?}"),
    };
    let (table, clamp_counts) = if want_bins {
        derive_size_bins(&table)?
    } else {
        (table, Vec::new())
    };

    let required = match &args.required {
        Some(list) => comma_list(list),
        None => table.pollutant_names.clone(),
    };
    let mut rules = Vec::new();
    for rule in &args.outliers {
        let Some((name, threshold)) = rule.split_once('<') else {
            bail!("outlier rule must look like NAME<THRESHOLD, got {rule:?}");
        };
        let threshold: f64 = threshold
            .trim()
            .parse()
            .with_context(|| format!("bad outlier threshold in {rule:?}"))?;
        rules.push((name.trim().to_string(), threshold));
    }

    let (matrix, report) = filter_complete(&table, &required, &rules)?;

    // Table-1 style summary in original units, before scaling.
    let summary = summarize_matrix(&matrix);
    write_csv(
        &args.out.join("summary.csv"),
        &[
            "pollutant", "count", "mean", "std", "median", "min", "max", "p15", "p85",
        ],
        summary.iter().map(|row| {
            vec![
                row.name.clone(),
                row.count.to_string(),
                fmt(row.mean),
                fmt(row.std),
                fmt(row.median),
                fmt(row.min),
                fmt(row.max),
                fmt(row.p15),
                fmt(row.p85),
            ]
        }),
    )?;

    let scaling = fit_scaling(&matrix)?;
    let scaled = apply_scaling(&matrix, &scaling)?;

    let matrix_path = args.out.join("matrix.csv");
    write_matrix(&scaled, &matrix_path)?;
    let mut meta = MatrixMetadata::describe(&scaled);
    meta.scaling = Some(scaling);
    meta.filter = Some(report.clone());
    meta.clamp_counts = clamp_counts.clone();
    meta.write(&args.out.join("matrix.meta.json"))?;

    manifest
        .param("input", args.input.display().to_string())
        .param("size_bins", &args.size_bins)
        .param("required", &required)
        .param("outliers", &args.outliers)
        .param("map", &args.map)
        .param("rows_parsed", rows_parsed)
        .param("rows_out", report.rows_out)
        .param("rows_dropped_incomplete", report.rows_dropped_incomplete)
        .param("rows_dropped_outlier", report.rows_dropped_outlier)
        .param("clamp_counts", &clamp_counts);
    manifest.write(&args.out)?;

    println!(
        "preprocess: {} rows in, {} retained ({} incomplete, {} outliers) -> {}",
        rows_parsed,
        report.rows_out,
        report.rows_dropped_incomplete,
        report.rows_dropped_outlier,
        matrix_path.display()
    );
    Ok(())
}
