//! Reproducible replicate-parallel Monte Carlo.
//!
//! Replicate `k` of a run seeded with `seed` draws from ChaCha8 stream `k`
//! of key `seed`, so its output does not depend on which worker runs it.
//! Results are collected in replicate order and reduced by pairwise
//! summation, which makes every estimate bit-identical across thread counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Random stream for replicate `replicate` of a run keyed by `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Independent master seed for a sub-experiment (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f` once per replicate on its own stream; output is in replicate order.
pub fn map_replicates<V, F>(replicates: usize, seed: u64, f: F) -> Vec<V>
where
    V: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> V + Sync,
{
    (0..replicates)
        .into_par_iter()
        .map(|k| {
            let mut rng = replicate_rng(seed, k as u64);
            f(k, &mut rng)
        })
        .collect()
}

/// Pairwise (cascade) summation in a fixed order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().fold(0.0, |a, b| a + b);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN, count: 0 };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let std_error = if n < 2 {
            0.0
        } else {
            let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&sq) / (n - 1) as f64 / n as f64).sqrt()
        };
        Self { mean, std_error, count: n }
    }
}

/// Kish effective sample size `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s = pairwise_sum(weights);
    let sq: Vec<f64> = weights.iter().map(|w| w * w).collect();
    let s2 = pairwise_sum(&sq);
    if s2 > 0.0 {
        (s * s / s2).min(weights.len() as f64)
    } else {
        0.0
    }
}

/// Half-width of the acceptance band in standard errors.
pub const SE_BAND: f64 = 4.0;

/// `|estimate - target| <= 4 SE`; with a zero standard error only
/// roundoff-level agreement passes.
pub fn within_band(estimate: f64, target: f64, std_error: f64) -> bool {
    let diff = (estimate - target).abs();
    if std_error > 0.0 {
        diff <= SE_BAND * std_error
    } else {
        diff <= 16.0 * f64::EPSILON * target.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Not enough data to decide (e.g. a conditioning event never occurred).
    Inconclusive,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// One line of a check report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    pub std_error: f64,
    pub verdict: Verdict,
}

impl CheckRow {
    pub fn banded(name: impl Into<String>, estimate: f64, target: f64, std_error: f64) -> Self {
        Self {
            name: name.into(),
            estimate,
            target,
            std_error,
            verdict: Verdict::from_pass(within_band(estimate, target, std_error)),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_order_independent() {
        let a: Vec<f64> = map_replicates(100, 9, |_, rng| rng.random());
        let b: Vec<f64> = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| map_replicates(100, 9, |_, rng| rng.random()));
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn summary_of_constants() {
        let s = Summary::of(&[1.0; 1000]);
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.std_error, 0.0);
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 49_995_000.0);
    }

    #[test]
    fn ess_bounds() {
        assert_eq!(effective_sample_size(&[1.0; 10]), 10.0);
        assert!((effective_sample_size(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn band() {
        assert!(within_band(1.0, 1.0, 0.0));
        assert!(!within_band(1.1, 1.0, 0.0));
        assert!(within_band(1.3, 1.0, 0.1));
        assert!(!within_band(1.5, 1.0, 0.1));
    }
}
