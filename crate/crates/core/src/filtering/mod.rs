//! Filtering the intensity from observed arrivals.
//!
//! Under the reference measure `Q` the observed process is a unit-rate
//! Poisson process independent of `X`, and `X` keeps its prior law. The
//! conditional law of `X_t` given the arrivals up to `t` is therefore the
//! prior reweighted by
//!
//! ```text
//! w = 1 / Z_t = exp(int_0^t (1 - X_s) ds) * prod_{T_k <= t} X_{T_k},
//! ```
//!
//! with the observed arrivals plugged in. Estimates are self-normalized
//! ratios over prior draws. [`oracle`] computes the same posterior means by
//! exact Bayes for priors where that is tractable.

pub mod oracle;

use crate::error::{config, domain, CoxError, Result};
use crate::girsanov::stochastic_exponential;
use crate::intensity::{CompoundPoissonIntensitySpec, IntensityPath, PriorSpec};
use crate::mc::{effective_sample_size, map_replicates, pairwise_sum};
use crate::simulation::PointPattern;

pub use oracle::{grid_oracle, OracleOptions};

/// A self-normalized estimate with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replicates: usize,
    pub effective_sample_size: f64,
}

/// Function of the current level whose conditional mean is estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelFunctional {
    Identity,
    Exp(f64),
    /// `1{x > threshold}`.
    Indicator(f64),
}

impl LevelFunctional {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            LevelFunctional::Identity => x,
            LevelFunctional::Exp(alpha) => (alpha * x).exp(),
            LevelFunctional::Indicator(c) => {
                if x > *c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `identity`, `exponential:ALPHA` (or `exp:ALPHA`), `indicator:THRESHOLD`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || config(format!("unknown functional `{s}`"));
        if s == "identity" {
            return Ok(LevelFunctional::Identity);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = arg.trim().parse().map_err(|_| bad())?;
        if !v.is_finite() {
            return Err(bad());
        }
        match kind.trim() {
            "exponential" | "exp" => Ok(LevelFunctional::Exp(v)),
            "indicator" => Ok(LevelFunctional::Indicator(v)),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for LevelFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LevelFunctional::Identity => write!(f, "identity"),
            LevelFunctional::Exp(a) => write!(f, "exponential:{a}"),
            LevelFunctional::Indicator(c) => write!(f, "indicator:{c}"),
        }
    }
}

/// `sum f w / sum w` over linear weights.
///
/// The ratio is accumulated around the value at the heaviest weight, so
/// identical values come back unchanged, and multiplying every weight by a
/// power of two leaves the result bit-identical.
pub fn weighted_ratio(values: &[f64], weights: &[f64]) -> Result<FilterEstimate> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(domain("values and weights must be nonempty and of equal length"));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(domain("weights must be finite and nonnegative"));
    }
    let total = pairwise_sum(weights);
    if !(total > 0.0) {
        return Err(CoxError::Degenerate("all weights vanish; the prior cannot explain the observation".into()));
    }
    let heaviest = (0..weights.len()).fold(0, |best, i| if weights[i] > weights[best] { i } else { best });
    let anchor = values[heaviest];
    let shifted: Vec<f64> = values.iter().zip(weights).map(|(v, w)| w * (v - anchor)).collect();
    let value = anchor + pairwise_sum(&shifted) / total;
    let sq: Vec<f64> = values.iter().zip(weights).map(|(v, w)| (w * (v - value)).powi(2)).collect();
    Ok(FilterEstimate {
        value,
        std_error: pairwise_sum(&sq).sqrt() / total,
        replicates: values.len(),
        effective_sample_size: effective_sample_size(weights),
    })
}

/// Self-normalized ratio from log weights; the largest weight becomes one.
pub fn log_weighted_ratio(values: &[f64], log_weights: &[f64]) -> Result<FilterEstimate> {
    let top = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(CoxError::Degenerate("all weights vanish; the prior cannot explain the observation".into()));
    }
    if top.is_nan() || top == f64::INFINITY {
        return Err(domain("log weights must be finite or -inf"));
    }
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - top).exp()).collect();
    weighted_ratio(values, &weights)
}

/// `log( exp(int_0^t (1 - X)) prod_{T_k <= t} X_{T_k} )`, i.e. `-log Z_t`
/// for the multiplier `1/X`. Computed as the log-likelihood ratio of the
/// observed arrivals under `X` against unit rate, which needs no division
/// and stays defined (as `-inf`) when `X` vanishes at an arrival.
pub fn log_filter_weight(path: &IntensityPath<f64>, observed: &PointPattern<f64>, t: f64) -> Result<f64> {
    let unit = IntensityPath::constant(1.0, path.horizon())?;
    // Z for the multiplier X against the unit-rate reference is exactly 1/Z
    // for the multiplier 1/X against X.
    stochastic_exponential(&unit, path, observed, t)
}

/// `prod_{s <= t} (1 + (X_s - 1) dN_s)` evaluated over the jumps of `N`.
/// Equal to `prod_{T_k <= t} X_{T_k}` for a simple pattern.
pub fn jump_product(path: &IntensityPath<f64>, observed: &PointPattern<f64>, t: f64) -> f64 {
    observed.arrivals()[..observed.count(t)]
        .iter()
        .map(|s| {
            let dn = (observed.count(*s) - observed.count_before(*s)) as f64;
            1.0 + (path.level_at(*s) - 1.0) * dn
        })
        .product()
}

fn check_observation(horizon: f64, observed: &PointPattern<f64>, t: f64) -> Result<()> {
    if observed.horizon() != horizon {
        return Err(domain(format!(
            "observation horizon {} differs from prior horizon {horizon}",
            observed.horizon()
        )));
    }
    if !(t >= 0.0 && t <= horizon) {
        return Err(domain(format!("t = {t} outside [0, {horizon}]")));
    }
    Ok(())
}

/// Kallianpur–Striebel estimate of `E[f(X_t) | arrivals up to t]` from
/// `replicates` prior draws.
pub fn ks_filter(
    prior: &PriorSpec,
    observed: &PointPattern<f64>,
    f: &LevelFunctional,
    t: f64,
    replicates: usize,
    seed: u64,
) -> Result<FilterEstimate> {
    prior.validate()?;
    if prior.admits_zero_levels() {
        return Err(config("filtering needs a prior with strictly positive levels"));
    }
    check_observation(prior.horizon(), observed, t)?;
    if replicates == 0 {
        return Err(config("replicates must be at least 1"));
    }
    let draws: Vec<(f64, f64)> = map_replicates(replicates, seed, |_, rng| {
        let path = prior.draw(rng);
        let lw = log_filter_weight(&path, observed, t).expect("horizons checked");
        (f.apply(path.level_at(t)), lw)
    });
    let (values, log_weights): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    log_weighted_ratio(&values, &log_weights)
}

/// Estimate of the intensity given the observed arrivals,
/// `E[X_t | arrivals up to t]`.
pub fn fn_intensity(
    prior: &PriorSpec,
    observed: &PointPattern<f64>,
    t: f64,
    replicates: usize,
    seed: u64,
) -> Result<FilterEstimate> {
    ks_filter(prior, observed, &LevelFunctional::Identity, t, replicates, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LaplaceMethod {
    /// Enumerate when the jump law is finite and at most six jumps are
    /// known, otherwise Monte Carlo.
    #[default]
    Auto,
    MonteCarlo,
    Enumerate,
}

/// Largest number of known jumps handled by exact enumeration.
pub const MAX_ENUMERATED_JUMPS: usize = 6;

#[derive(Debug, Clone, Copy)]
pub struct LaplaceConfig {
    pub alpha: f64,
    pub t: f64,
    pub method: LaplaceMethod,
    pub replicates: usize,
    pub seed: u64,
}

/// `E[exp(alpha X_t) | arrivals and jump times of M up to t]` for a
/// compound-Poisson intensity: only the jump sizes are unknown, so the
/// prior over paths is the product law of the first `m = M_t` sizes.
pub fn laplace_filter(
    spec: &CompoundPoissonIntensitySpec,
    horizon: f64,
    observed: &PointPattern<f64>,
    jump_times: &[f64],
    cfg: LaplaceConfig,
) -> Result<FilterEstimate> {
    spec.validate()?;
    check_observation(horizon, observed, cfg.t)?;
    if jump_times.windows(2).any(|w| !(w[0] < w[1])) || jump_times.iter().any(|s| !(*s > 0.0 && *s < horizon)) {
        return Err(domain("jump times must be strictly increasing inside (0, horizon)"));
    }
    if !cfg.alpha.is_finite() || !spec.jump_law.has_finite_mgf(cfg.alpha) {
        return Err(domain(format!("exp(alpha * jump) is not integrable for alpha = {}", cfg.alpha)));
    }
    let known: Vec<f64> = jump_times.iter().cloned().filter(|s| *s <= cfg.t).collect();
    let m = known.len();
    let f = LevelFunctional::Exp(cfg.alpha);
    let evaluate = |sizes: &[f64]| -> (f64, f64) {
        let path = spec.path_from_jumps(&known, sizes, horizon).expect("validated jump times");
        let lw = log_filter_weight(&path, observed, cfg.t).expect("horizons checked");
        (f.apply(path.level_at(cfg.t)), lw)
    };
    let atoms = spec.jump_law.atoms();
    let enumerate = match cfg.method {
        LaplaceMethod::MonteCarlo => false,
        LaplaceMethod::Enumerate => {
            if atoms.is_none() || m > MAX_ENUMERATED_JUMPS {
                return Err(config(format!(
                    "enumeration needs a finite jump law and at most {MAX_ENUMERATED_JUMPS} known jumps"
                )));
            }
            true
        }
        LaplaceMethod::Auto => atoms.is_some() && m <= MAX_ENUMERATED_JUMPS,
    };
    let (values, log_weights): (Vec<f64>, Vec<f64>) = if enumerate {
        let atoms = atoms.expect("checked above");
        enumerate_sizes(&atoms, m)
            .into_iter()
            .map(|(sizes, ln_p)| {
                let (v, lw) = evaluate(&sizes);
                (v, lw + ln_p)
            })
            .unzip()
    } else {
        if cfg.replicates == 0 {
            return Err(config("replicates must be at least 1"));
        }
        map_replicates(cfg.replicates, cfg.seed, |_, rng| {
            let sizes: Vec<f64> = (0..m).map(|_| spec.jump_law.sample(rng)).collect();
            evaluate(&sizes)
        })
        .into_iter()
        .unzip()
    };
    let mut est = log_weighted_ratio(&values, &log_weights)?;
    if enumerate {
        est.std_error = 0.0;
    }
    Ok(est)
}

/// Every size vector of length `m` over the atoms with its log probability.
fn enumerate_sizes(atoms: &[(f64, f64)], m: usize) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(Vec::with_capacity(m), 0.0)];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|(sizes, ln_p)| {
                atoms.iter().filter(|(_, p)| *p > 0.0).map(move |(v, p)| {
                    let mut next = sizes.clone();
                    next.push(*v);
                    (next, ln_p + p.ln())
                })
            })
            .collect();
    }
    out
}
