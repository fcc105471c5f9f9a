//! `case-study`: compare an incident window against the same clock hours on
//! the previous and next days, per target column, pooled or per location.

use std::path::PathBuf;

use anyhow::Context;
use chrono::NaiveDateTime;
use geonmf::ingest::TIMESTAMP_FORMAT;
use geonmf::interpret::{case_study, CaseStudyOptions};

use crate::common::{comma_list, ensure_out_dir, MatrixArgs};
use crate::manifest::ManifestBuilder;
use crate::tables::{fmt, write_csv};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub matrix: MatrixArgs,

    /// Incident window start, `YYYY-MM-DD HH:MM` (inclusive).
    #[arg(long)]
    pub window_start: String,

    /// Incident window end, `YYYY-MM-DD HH:MM` (inclusive).
    #[arg(long)]
    pub window_end: String,

    /// Target columns to test.
    #[arg(long)]
    pub targets: String,

    /// Analyze each location separately instead of pooled.
    #[arg(long)]
    pub per_location: bool,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut manifest = ManifestBuilder::new("case-study");
    ensure_out_dir(&args.out)?;
    args.matrix.record(&mut manifest)?;

    let parse_ts = |text: &str| -> anyhow::Result<NaiveDateTime> {
        NaiveDateTime::parse_from_str(text, TIMESTAMP_FORMAT)
            .with_context(|| format!("bad timestamp {text:?}, expected YYYY-MM-DD HH:MM"))
    };
    let options = CaseStudyOptions {
        window_start: parse_ts(&args.window_start)?,
        window_end: parse_ts(&args.window_end)?,
        targets: comma_list(&args.targets),
        per_location: args.per_location,
    };

    let (matrix, _) = args.matrix.load()?;
    let entries = case_study(&matrix, &options)?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    for entry in &entries {
        let location = entry.location.clone().unwrap_or_else(|| "pooled".into());
        for (side, summary, with_tests) in [
            ("incident", &entry.incident, true),
            ("control", &entry.control, false),
        ] {
            rows.push(vec![
                location.clone(),
                entry.target.clone(),
                side.to_string(),
                summary.count.to_string(),
                fmt(summary.mean),
                fmt(summary.std),
                fmt(summary.median),
                fmt(summary.p85),
                fmt(summary.p95),
                fmt(summary.max),
                if with_tests { fmt(entry.mw.statistic) } else { String::new() },
                if with_tests { fmt(entry.mw.p_value) } else { String::new() },
                if with_tests { fmt(entry.ks.statistic) } else { String::new() },
                if with_tests { fmt(entry.ks.p_value) } else { String::new() },
            ]);
        }
    }
    write_csv(
        &args.out.join("case_study.csv"),
        &[
            "location", "target", "side", "count", "mean", "std", "median", "p85", "p95", "max",
            "mw_u", "mw_p", "ks_d", "ks_p",
        ],
        rows,
    )?;

    manifest
        .param("window_start", &args.window_start)
        .param("window_end", &args.window_end)
        .param("targets", &options.targets)
        .param("per_location", args.per_location);
    manifest.write(&args.out)?;

    println!(
        "case-study: {} entries -> {}",
        entries.len(),
        args.out.display()
    );
    Ok(())
}
