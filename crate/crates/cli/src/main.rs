//! Command-line pipeline: preprocess sensor tables, fit source models,
//! bootstrap uncertainty, select K, and run the downstream analyses. Every
//! command writes its outputs plus a reproducibility manifest into `--out`.

mod commands;
mod common;
mod manifest;
mod tables;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "geonmf",
    version,
    about = "Geometric NMF source apportionment for multi-pollutant sensor data"
)]
struct Cli {
    /// Cap the worker thread count. Outputs are identical regardless.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, bin, filter, and scale a raw sensor table.
    Preprocess(commands::preprocess::Args),
    /// Fit a source model (geometric, XRAY, or least-squares NMF).
    Fit(commands::fit::Args),
    /// Bootstrap the attribution matrix and report stability diagnostics.
    Bootstrap(commands::bootstrap::Args),
    /// Stability diagnostics across candidate source counts.
    SelectK(commands::select_k::Args),
    /// Bootstrap regressions of source intensities (or a column) on covariates.
    Regress(commands::regress::Args),
    /// Hour-of-day averages of a column or fitted source intensity.
    Diurnal(commands::diurnal::Args),
    /// Incident-window comparison with one-sided MW and KS tests.
    CaseStudy(commands::case_study::Args),
    /// Separability diagnostics and hull-projection exports.
    Adequacy(commands::adequacy::Args),
    /// Generate synthetic data with known ground truth.
    Simulate(commands::simulate::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore failure: the global pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match cli.command {
        Command::Preprocess(args) => commands::preprocess::run(args),
        Command::Fit(args) => commands::fit::run(args),
        Command::Bootstrap(args) => commands::bootstrap::run(args),
        Command::SelectK(args) => commands::select_k::run(args),
        Command::Regress(args) => commands::regress::run(args),
        Command::Diurnal(args) => commands::diurnal::run(args),
        Command::CaseStudy(args) => commands::case_study::run(args),
        Command::Adequacy(args) => commands::adequacy::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
