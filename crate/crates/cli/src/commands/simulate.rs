//! `simulate`: synthetic data with known ground truth, written in the same
//! matrix/metadata format as `preprocess` plus a truth bundle.

use std::path::PathBuf;

use anyhow::Context;
use geonmf::ingest::{write_matrix, MatrixMetadata};
use geonmf::synth::{
    generate, generate_covariates, CovariateDef, CovariateKind, Effect, EffectSpec, ProfileSpec,
    SynthConfig,
};

use crate::common::ensure_out_dir;
use crate::manifest::ManifestBuilder;
use crate::tables::{fmt, write_csv};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Rows to generate.
    #[arg(long)]
    pub n: usize,

    /// Pollutant count.
    #[arg(long)]
    pub j: usize,

    /// True source count.
    #[arg(long)]
    pub k: usize,

    /// Pure-draw probability per source.
    #[arg(long, default_value_t = 0.05)]
    pub p_pure: f64,

    /// Maximum off-source mass in a near-pure draw.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,

    /// Additive noise level (scaled units).
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,

    #[arg(long, default_value_t = 0.5)]
    pub scale_lo: f64,

    #[arg(long, default_value_t = 2.0)]
    pub scale_hi: f64,

    /// Minimum pairwise L1 separation of the random true profiles.
    #[arg(long, default_value_t = 0.5)]
    pub min_separation: f64,

    /// Minimum entry of the random true profiles.
    #[arg(long, default_value_t = 0.0)]
    pub min_entry: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Inject a binary covariate `flag` shifting SOURCE by COEF, given as
    /// SOURCE:COEF with 1-based sources (repeatable).
    #[arg(long = "flag-effect")]
    pub flag_effects: Vec<String>,

    /// P(flag = 1) when flag effects are injected.
    #[arg(long, default_value_t = 0.5)]
    pub flag_p: f64,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut manifest = ManifestBuilder::new("simulate");
    ensure_out_dir(&args.out)?;

    let config = SynthConfig {
        n: args.n,
        j: args.j,
        k: args.k,
        profiles: ProfileSpec::RandomInterior {
            min_l1_separation: args.min_separation,
            min_entry: args.min_entry,
        },
        p_pure: args.p_pure,
        purity_epsilon: args.epsilon,
        scale_range: (args.scale_lo, args.scale_hi),
        noise_sigma: args.sigma,
        seed: args.seed,
    };

    let data = if args.flag_effects.is_empty() {
        generate(&config)?
    } else {
        let mut effects = Vec::new();
        for text in &args.flag_effects {
            let Some((source, coef)) = text.split_once(':') else {
                anyhow::bail!("flag effect must look like SOURCE:COEF, got {text:?}");
            };
            let source: usize = source
                .trim()
                .parse()
                .with_context(|| format!("bad source in {text:?}"))?;
            if source == 0 || source > args.k {
                anyhow::bail!("flag-effect source must be in 1..={}", args.k);
            }
            effects.push(Effect {
                covariate: "flag".into(),
                source: source - 1,
                coefficient: coef
                    .trim()
                    .parse()
                    .with_context(|| format!("bad coefficient in {text:?}"))?,
            });
        }
        let spec = EffectSpec {
            covariates: vec![CovariateDef {
                name: "flag".into(),
                kind: CovariateKind::Binary { p_one: args.flag_p },
            }],
            effects,
            interactions: vec![],
        };
        generate_covariates(&config, &spec)?.0
    };

    let matrix_path = args.out.join("data.csv");
    write_matrix(&data.matrix, &matrix_path)?;
    MatrixMetadata::describe(&data.matrix).write(&args.out.join("data.meta.json"))?;

    // Ground-truth bundle.
    let mut header = vec!["source".to_string()];
    header.extend(data.matrix.pollutant_names.iter().cloned());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let truth_rows = |values: &ndarray::Array2<f64>| -> Vec<Vec<String>> {
        (0..args.k)
            .map(|r| {
                let mut row = vec![format!("T{}", r + 1)];
                for c in 0..args.j {
                    row.push(fmt(values[[r, c]]));
                }
                row
            })
            .collect()
    };
    write_csv(&args.out.join("truth_h0.csv"), &header_refs, truth_rows(&data.h0))?;
    write_csv(
        &args.out.join("truth_phi0.csv"),
        &header_refs,
        truth_rows(&data.phi0),
    )?;
    write_csv(
        &args.out.join("truth_mu0.csv"),
        &["source", "mu"],
        data.mu0
            .iter()
            .enumerate()
            .map(|(r, mu)| vec![format!("T{}", r + 1), fmt(*mu)]),
    )?;

    manifest
        .param("n", args.n)
        .param("j", args.j)
        .param("k", args.k)
        .param("p_pure", args.p_pure)
        .param("epsilon", args.epsilon)
        .param("sigma", args.sigma)
        .param("scale_lo", args.scale_lo)
        .param("scale_hi", args.scale_hi)
        .param("min_separation", args.min_separation)
        .param("min_entry", args.min_entry)
        .param("seed", args.seed)
        .param("flag_effects", &args.flag_effects)
        .param("flag_p", args.flag_p);
    manifest.write(&args.out)?;

    println!(
        "simulate: {} rows x {} pollutants, K={} -> {}",
        args.n,
        args.j,
        args.k,
        matrix_path.display()
    );
    Ok(())
}
