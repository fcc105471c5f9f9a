//! Seeded ground-truth data generators. Rows are built as
//! `y_i = s_i (w_i H0) + noise` with occasional near-pure intensity draws
//! per source, so the attribution truth is known exactly and the whole
//! pipeline can be verified against it.

use chrono::NaiveDateTime;
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::polytope_volume;
use crate::ingest::PollutantMatrix;
use crate::numeric::splitmix64;

/// How the true profile matrix is obtained.
#[derive(Debug, Clone)]
pub enum ProfileSpec {
    /// Row-stochastic K x J matrix supplied by the caller.
    Fixed(Array2<f64>),
    /// Rows drawn in the simplex interior, redrawn until every pair is at
    /// least `min_l1_separation` apart in L1 and every entry is at least
    /// `min_entry`.
    RandomInterior {
        min_l1_separation: f64,
        min_entry: f64,
    },
}

/// Generator configuration.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub profiles: ProfileSpec,
    /// Probability that a row is drawn near-pure for any one source.
    pub p_pure: f64,
    /// Maximum intensity mass off the pure source in a near-pure draw.
    pub purity_epsilon: f64,
    /// Per-row scale drawn uniformly from this range.
    pub scale_range: (f64, f64),
    /// Additive Gaussian noise level in scaled-data units, truncated at 0.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// A separable baseline: K well-separated random profiles, 5% pure rows
    /// per source, unit-ish scales, no noise.
    pub fn separable(n: usize, j: usize, k: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n,
            j,
            k,
            profiles: ProfileSpec::RandomInterior {
                min_l1_separation: 0.5,
                min_entry: 0.0,
            },
            p_pure: 0.05,
            purity_epsilon: 0.0,
            scale_range: (0.5, 2.0),
            noise_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.j < 2 || self.n < self.j {
            return Err(Error::Invalid("need n >= J >= 2".into()));
        }
        if self.k == 0 || self.k > self.j {
            return Err(Error::Invalid("need 1 <= K <= J".into()));
        }
        if self.p_pure < 0.0 || self.p_pure * self.k as f64 > 1.0 {
            return Err(Error::Invalid("need p_pure >= 0 with p_pure * K <= 1".into()));
        }
        if !(0.0..0.5).contains(&self.purity_epsilon) {
            return Err(Error::Invalid("purity epsilon must be in [0, 0.5)".into()));
        }
        if !(self.scale_range.0 > 0.0 && self.scale_range.1 >= self.scale_range.0) {
            return Err(Error::Invalid("scale range must be positive".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Invalid("noise sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generated data plus the exact ground truth.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub matrix: PollutantMatrix,
    /// True row-stochastic profiles (K x J).
    pub h0: Array2<f64>,
    /// Realized scaled intensities (n x K), covariate effects included.
    pub w0: Array2<f64>,
    /// Column means of `w0`.
    pub mu0: Vec<f64>,
    /// True attribution matrix from `mu0` and `h0`; columns sum to one.
    pub phi0: Array2<f64>,
    /// Rows drawn near-pure, per source.
    pub pure_rows: Vec<Vec<usize>>,
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Interior simplex draw via normalized exponentials.
fn interior_weights<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k)
        .map(|_| -(rng.random::<f64>().max(f64::MIN_POSITIVE)).ln())
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

fn draw_profiles(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    match &config.profiles {
        ProfileSpec::Fixed(h) => {
            if h.dim() != (config.k, config.j) {
                return Err(Error::Invalid("profile matrix must be K x J".into()));
            }
            let mut h = h.clone();
            for mut row in h.rows_mut() {
                let sum: f64 = row.iter().sum();
                if !(sum > 0.0) || row.iter().any(|v| *v < 0.0) {
                    return Err(Error::Invalid(
                        "profile rows must be non-negative with positive sums".into(),
                    ));
                }
                row.mapv_inplace(|v| v / sum);
            }
            if polytope_volume(h.view()) <= 0.0 {
                return Err(Error::Invalid("profile rows affinely dependent".into()));
            }
            Ok(h)
        }
        ProfileSpec::RandomInterior {
            min_l1_separation,
            min_entry,
        } => {
            if *min_entry * config.j as f64 >= 1.0 {
                return Err(Error::Invalid("min_entry * J must stay below 1".into()));
            }
            for _ in 0..1000 {
                let mut h = Array2::zeros((config.k, config.j));
                for r in 0..config.k {
                    // Mix toward uniform so every entry clears the floor.
                    let blend = min_entry * config.j as f64;
                    for (c, v) in interior_weights(rng, config.j).into_iter().enumerate() {
                        h[[r, c]] = blend / config.j as f64 + (1.0 - blend) * v;
                    }
                }
                let mut ok = polytope_volume(h.view()) > 1e-6
                    && h.iter().all(|v| *v >= *min_entry);
                'pairs: for a in 0..config.k {
                    for b in (a + 1)..config.k {
                        let l1: f64 = (0..config.j)
                            .map(|c| (h[[a, c]] - h[[b, c]]).abs())
                            .sum();
                        if l1 < *min_l1_separation {
                            ok = false;
                            break 'pairs;
                        }
                    }
                }
                if ok {
                    return Ok(h);
                }
            }
            Err(Error::Invalid(
                "could not draw sufficiently separated profiles; lower min_l1_separation".into(),
            ))
        }
    }
}

/// Attribution truth from realized mean intensities.
fn attribution_from(mu: &[f64], h: &Array2<f64>) -> Result<Array2<f64>> {
    let (k, j) = h.dim();
    let mut phi = Array2::zeros((k, j));
    for col in 0..j {
        let denom: f64 = (0..k).map(|r| mu[r] * h[[r, col]]).sum();
        if !(denom > 0.0) {
            return Err(Error::Invalid(format!(
                "no source touches pollutant column {col}"
            )));
        }
        for r in 0..k {
            phi[[r, col]] = mu[r] * h[[r, col]] / denom;
        }
    }
    Ok(phi)
}

/// Generate a synthetic matrix with known ground truth.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    generate_inner(config, None).map(|(data, _)| data)
}

/// Covariate definition for [`generate_covariates`].
#[derive(Debug, Clone)]
pub struct CovariateDef {
    pub name: String,
    pub kind: CovariateKind,
}

#[derive(Debug, Clone)]
pub enum CovariateKind {
    /// Bernoulli flag (0/1).
    Binary { p_one: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// Additive effect of one covariate on one source's intensity column.
#[derive(Debug, Clone)]
pub struct Effect {
    pub covariate: String,
    pub source: usize,
    pub coefficient: f64,
}

/// Additive effect of a covariate product on one source's intensity.
#[derive(Debug, Clone)]
pub struct InteractionEffect {
    pub a: String,
    pub b: String,
    pub source: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EffectSpec {
    pub covariates: Vec<CovariateDef>,
    pub effects: Vec<Effect>,
    pub interactions: Vec<InteractionEffect>,
}

/// A coefficient injected into the generator, for test harnesses.
#[derive(Debug, Clone)]
pub struct TrueCoefficient {
    pub source: usize,
    /// Covariate name, or `a:b` for an interaction.
    pub name: String,
    pub value: f64,
}

/// Generate with covariate columns and linear intensity perturbations:
/// `w0[i][k] += sum coef * x` (clipped at 0), then `y = w0 H0 + noise`.
/// Covariates draw from a separate seeded stream, so a spec with zero
/// coefficients realizes exactly the same `w0` as [`generate`].
pub fn generate_covariates(
    config: &SynthConfig,
    spec: &EffectSpec,
) -> Result<(SynthData, Vec<TrueCoefficient>)> {
    for e in &spec.effects {
        if e.source >= config.k {
            return Err(Error::Invalid(format!("effect names source {}", e.source)));
        }
        if !spec.covariates.iter().any(|c| c.name == e.covariate) {
            return Err(Error::Invalid(format!(
                "effect names unknown covariate {:?}",
                e.covariate
            )));
        }
        if !e.coefficient.is_finite() {
            return Err(Error::Invalid("effect coefficient must be finite".into()));
        }
    }
    for e in &spec.interactions {
        if e.source >= config.k {
            return Err(Error::Invalid(format!("interaction names source {}", e.source)));
        }
        for name in [&e.a, &e.b] {
            if !spec.covariates.iter().any(|c| &c.name == name) {
                return Err(Error::Invalid(format!(
                    "interaction names unknown covariate {name:?}"
                )));
            }
        }
        if !e.coefficient.is_finite() {
            return Err(Error::Invalid("interaction coefficient must be finite".into()));
        }
    }
    let (data, _) = generate_inner(config, Some(spec))?;
    let mut truth = Vec::new();
    for e in &spec.effects {
        truth.push(TrueCoefficient {
            source: e.source,
            name: e.covariate.clone(),
            value: e.coefficient,
        });
    }
    for e in &spec.interactions {
        truth.push(TrueCoefficient {
            source: e.source,
            name: format!("{}:{}", e.a, e.b),
            value: e.coefficient,
        });
    }
    Ok((data, truth))
}

fn generate_inner(
    config: &SynthConfig,
    spec: Option<&EffectSpec>,
) -> Result<(SynthData, ())> {
    config.validate()?;
    let (n, j, k) = (config.n, config.j, config.k);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cov_rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0x636f76)); // covariate stream

    let h0 = draw_profiles(config, &mut rng)?;

    let cov_defs: &[CovariateDef] = spec.map(|s| s.covariates.as_slice()).unwrap_or(&[]);
    let mut cov_values: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(n); cov_defs.len()];

    let mut w0 = Array2::zeros((n, k));
    let mut values = Array2::zeros((n, j));
    let mut pure_rows = vec![Vec::new(); k];
    let (lo, hi) = config.scale_range;

    for i in 0..n {
        // Covariates first (independent stream).
        let mut xs = Vec::with_capacity(cov_defs.len());
        for (c, def) in cov_defs.iter().enumerate() {
            let x = match def.kind {
                CovariateKind::Binary { p_one } => {
                    if cov_rng.random::<f64>() < p_one {
                        1.0
                    } else {
                        0.0
                    }
                }
                CovariateKind::Uniform { lo, hi } => lo + cov_rng.random::<f64>() * (hi - lo),
            };
            cov_values[c].push(Some(x));
            xs.push(x);
        }

        // Intensity weights: near-pure with probability p_pure per source.
        let u: f64 = rng.random();
        let weights = if u < config.p_pure * k as f64 {
            let source = ((u / config.p_pure) as usize).min(k - 1);
            pure_rows[source].push(i);
            let mut w = vec![0.0; k];
            if config.purity_epsilon > 0.0 && k > 1 {
                let off = config.purity_epsilon * rng.random::<f64>();
                let spread = interior_weights(&mut rng, k - 1);
                let mut idx = 0;
                for (l, w_l) in w.iter_mut().enumerate() {
                    if l != source {
                        *w_l = off * spread[idx];
                        idx += 1;
                    }
                }
                w[source] = 1.0 - off;
            } else {
                w[source] = 1.0;
            }
            w
        } else {
            interior_weights(&mut rng, k)
        };

        let scale = lo + rng.random::<f64>() * (hi - lo);
        for c in 0..k {
            w0[[i, c]] = scale * weights[c];
        }

        // Injected covariate effects perturb the realized intensities.
        if let Some(spec) = spec {
            for e in &spec.effects {
                let pos = cov_defs.iter().position(|d| d.name == e.covariate).unwrap();
                w0[[i, e.source]] += e.coefficient * xs[pos];
            }
            for e in &spec.interactions {
                let pa = cov_defs.iter().position(|d| d.name == e.a).unwrap();
                let pb = cov_defs.iter().position(|d| d.name == e.b).unwrap();
                w0[[i, e.source]] += e.coefficient * xs[pa] * xs[pb];
            }
            for c in 0..k {
                if w0[[i, c]] < 0.0 {
                    w0[[i, c]] = 0.0;
                }
            }
        }

        for col in 0..j {
            let mut y = (0..k).map(|c| w0[[i, c]] * h0[[c, col]]).sum::<f64>();
            if config.noise_sigma > 0.0 {
                y += config.noise_sigma * standard_normal(&mut rng);
            }
            values[[i, col]] = y.max(0.0);
        }
    }

    let mu0: Vec<f64> = (0..k).map(|c| w0.column(c).sum() / n as f64).collect();
    let phi0 = attribution_from(&mu0, &h0)?;

    let base = NaiveDateTime::parse_from_str("2023-01-01 00:00", "%Y-%m-%d %H:%M").unwrap();
    let matrix = PollutantMatrix::new(
        values,
        (1..=j).map(|i| format!("P{i}")).collect(),
        (0..n)
            .map(|i| base + chrono::Duration::minutes(i as i64))
            .collect(),
        vec!["S1".into(); n],
        cov_defs.iter().map(|d| d.name.clone()).collect(),
        cov_values,
    )?;

    Ok((
        SynthData {
            matrix,
            h0,
            w0,
            mu0,
            phi0,
            pure_rows,
        },
        (),
    ))
}
