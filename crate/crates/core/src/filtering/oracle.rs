//! Exact Bayes posterior means for checking the Monte Carlo filters.
//!
//! Given a path `x`, the observed arrivals on `[0, t]` have likelihood
//! `e^{-int_0^t x} prod_{T_k <= t} x_{T_k}`. The oracle integrates this
//! against the prior directly:
//!
//! * fixed path: the functional of the path;
//! * discrete random level: a finite sum;
//! * gamma random level: the conjugate gamma posterior in closed form;
//! * uniform random level: composite Simpson on a refined grid;
//! * compound Poisson with finitely many jump sizes: the unnormalized
//!   forward equation of `X` killed at rate `X` and multiplied by `X` at
//!   each arrival, solved by uniformization on the states reachable with at
//!   most `K` jumps.
//!
//! Every approximation is refined once and compared with its refinement; a
//! disagreement beyond the tolerance is reported, never returned.

use std::collections::HashMap;

use statrs::distribution::{ContinuousCDF, Gamma};

use super::LevelFunctional;
use crate::error::{config, domain, CoxError, Result};
use crate::intensity::{CompoundPoissonIntensitySpec, LevelLaw, PriorSpec};
use crate::simulation::PointPattern;
use crate::special::poisson_cdf;

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Largest accepted gap between an approximation and its refinement.
    pub tolerance: f64,
    /// Prior probability of more jumps than the enumerated ones.
    pub jump_tail: f64,
    /// How far the jump cap may grow past its prior-based start while the
    /// answer keeps moving.
    pub max_extra_jumps: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, jump_tail: 1e-10, max_extra_jumps: 60 }
    }
}

/// `E[f(X_t) | arrivals up to t]` by direct Bayes.
pub fn grid_oracle(
    prior: &PriorSpec,
    observed: &PointPattern<f64>,
    f: &LevelFunctional,
    t: f64,
    opts: OracleOptions,
) -> Result<f64> {
    prior.validate()?;
    let horizon = prior.horizon();
    if observed.horizon() != horizon {
        return Err(domain("observation horizon differs from prior horizon"));
    }
    if !(t >= 0.0 && t <= horizon) {
        return Err(domain(format!("t = {t} outside [0, {horizon}]")));
    }
    let arrivals = &observed.arrivals()[..observed.count(t)];
    match prior {
        PriorSpec::Fixed(path) => {
            let lw = super::log_filter_weight(path, observed, t)?;
            if lw == f64::NEG_INFINITY {
                return Err(degenerate());
            }
            Ok(f.apply(path.level_at(t)))
        }
        PriorSpec::RandomLevel { law, .. } => level_posterior(law, arrivals.len(), t, f, opts),
        PriorSpec::CompoundPoisson { spec, .. } => compound_poisson_posterior(spec, arrivals, t, f, opts),
    }
}

fn degenerate() -> CoxError {
    CoxError::Degenerate("the observation has zero likelihood under every path".into())
}

/// Log-likelihood of `n` arrivals in `[0, t]` under a constant level `x`.
fn ln_level_likelihood(x: f64, n: usize, t: f64) -> f64 {
    if n == 0 {
        -x * t
    } else if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        n as f64 * x.ln() - x * t
    }
}

fn level_posterior(law: &LevelLaw, n: usize, t: f64, f: &LevelFunctional, opts: OracleOptions) -> Result<f64> {
    match law {
        LevelLaw::Discrete { values, probs } => {
            let lw: Vec<f64> = values
                .iter()
                .zip(probs)
                .map(|(x, p)| if *p > 0.0 { p.ln() + ln_level_likelihood(*x, n, t) } else { f64::NEG_INFINITY })
                .collect();
            let top = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if top == f64::NEG_INFINITY {
                return Err(degenerate());
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (x, l) in values.iter().zip(&lw) {
                let w = (l - top).exp();
                num += w * f.apply(*x);
                den += w;
            }
            Ok(num / den)
        }
        LevelLaw::Gamma { shape, scale } => {
            let (a, rate) = (shape + n as f64, 1.0 / scale + t);
            match f {
                LevelFunctional::Identity => Ok(a / rate),
                LevelFunctional::Exp(alpha) => {
                    if *alpha >= rate {
                        return Err(config(format!("posterior exp({alpha} X) has infinite mean")));
                    }
                    Ok((a * (rate.ln() - (rate - alpha).ln())).exp())
                }
                LevelFunctional::Indicator(c) => {
                    let g = Gamma::new(a, rate).map_err(|e| domain(e.to_string()))?;
                    Ok(g.sf(*c))
                }
            }
        }
        LevelLaw::Uniform { low, high } => uniform_posterior(*low, *high, n, t, f, opts),
    }
}

/// Posterior mean for a uniform level by composite Simpson, doubling the
/// grid until two successive ratios agree.
fn uniform_posterior(low: f64, high: f64, n: usize, t: f64, f: &LevelFunctional, opts: OracleOptions) -> Result<f64> {
    // Scale by the likelihood maximum on [low, high] to keep values near one.
    let mode = if t > 0.0 { (n as f64 / t).clamp(low, high) } else { high };
    let peak = ln_level_likelihood(mode, n, t);
    let g = |x: f64| (ln_level_likelihood(x, n, t) - peak).exp();
    // Split at an indicator threshold so each piece is smooth.
    let mut cuts = vec![low, high];
    if let LevelFunctional::Indicator(c) = f {
        if *c > low && *c < high {
            cuts.insert(1, *c);
        }
    }
    let ratio = |cells: usize| {
        let (mut num, mut den) = (0.0, 0.0);
        for w in cuts.windows(2) {
            // an indicator is constant on each piece, including at the cut
            let mid = 0.5 * (w[0] + w[1]);
            let fx = |x: f64| match f {
                LevelFunctional::Indicator(_) => f.apply(mid),
                _ => f.apply(x),
            };
            num += simpson(|x| fx(x) * g(x), w[0], w[1], cells);
            den += simpson(g, w[0], w[1], cells);
        }
        (num, den)
    };
    let mut cells = 64;
    let mut previous = ratio(cells);
    let mut gap = f64::INFINITY;
    while cells < 1 << 22 {
        cells *= 2;
        let current = ratio(cells);
        if !(current.1 > 0.0) {
            return Err(degenerate());
        }
        let b = current.0 / current.1;
        gap = (previous.0 / previous.1 - b).abs();
        if gap <= opts.tolerance * b.abs().max(1.0) {
            return Ok(b);
        }
        previous = current;
    }
    Err(CoxError::Refinement {
        message: "uniform-level quadrature did not settle".into(),
        bound: gap,
        tolerance: opts.tolerance,
    })
}

fn simpson(g: impl Fn(f64) -> f64, a: f64, b: f64, cells: usize) -> f64 {
    let h = (b - a) / cells as f64;
    let mut acc = g(a) + g(b);
    for i in 1..cells {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// States of a compound-Poisson level with finitely many jump sizes: jump
/// multisets of size at most `max_jumps`.
struct LevelChain {
    levels: Vec<f64>,
    /// `(target state, rate)` for each state; empty at the cap.
    moves: Vec<Vec<(usize, f64)>>,
    jump_rate: f64,
}

impl LevelChain {
    fn build(spec: &CompoundPoissonIntensitySpec, atoms: &[(f64, f64)], max_jumps: usize) -> Self {
        let atoms: Vec<(f64, f64)> = atoms.iter().cloned().filter(|(_, p)| *p > 0.0).collect();
        let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut counts = vec![vec![0u32; atoms.len()]];
        index.insert(counts[0].clone(), 0);
        let mut frontier = vec![0usize];
        for _ in 0..max_jumps {
            let mut next = Vec::new();
            for s in frontier {
                for i in 0..atoms.len() {
                    let mut c = counts[s].clone();
                    c[i] += 1;
                    if !index.contains_key(&c) {
                        index.insert(c.clone(), counts.len());
                        next.push(counts.len());
                        counts.push(c);
                    }
                }
            }
            frontier = next;
        }
        let levels = counts
            .iter()
            .map(|c| spec.x0 + c.iter().zip(&atoms).map(|(k, (v, _))| *k as f64 * v).sum::<f64>())
            .collect();
        let moves = counts
            .iter()
            .map(|c| {
                (0..atoms.len())
                    .filter_map(|i| {
                        let mut d = c.clone();
                        d[i] += 1;
                        index.get(&d).map(|&s| (s, spec.jump_rate * atoms[i].1))
                    })
                    .collect()
            })
            .collect();
        Self { levels, moves, jump_rate: spec.jump_rate }
    }

    /// Applies `exp(h A)` to the row vector `q`, where `A` moves mass along
    /// jumps and kills it at rate `level`. Jumps out of the capped states
    /// are lost, so the lost mass bounds the truncation.
    fn evolve(&self, q: &mut Vec<f64>, h: f64) {
        if h <= 0.0 {
            return;
        }
        let top = self.levels.iter().cloned().fold(0.0, f64::max);
        let c = self.jump_rate + top;
        let steps = (c * h / 30.0).ceil().max(1.0) as usize;
        let dh = h / steps as f64;
        for _ in 0..steps {
            *q = self.uniformized(q, c, c * dh);
        }
    }

    fn uniformized(&self, q: &[f64], c: f64, ch: f64) -> Vec<f64> {
        let mut term = q.to_vec();
        let mut weight = (-ch).exp();
        let mut out: Vec<f64> = term.iter().map(|v| v * weight).collect();
        let mut mass = weight;
        let mut k = 0usize;
        while 1.0 - mass > 1e-17 && k < 10_000 {
            k += 1;
            let mut next: Vec<f64> = term
                .iter()
                .zip(&self.levels)
                .map(|(v, x)| v * (1.0 - (self.jump_rate + x) / c))
                .collect();
            for (s, mv) in self.moves.iter().enumerate() {
                for (to, rate) in mv {
                    next[*to] += term[s] * rate / c;
                }
            }
            term = next;
            weight *= ch / k as f64;
            mass += weight;
            for (o, v) in out.iter_mut().zip(&term) {
                *o += v * weight;
            }
        }
        out
    }
}

fn compound_poisson_posterior(
    spec: &CompoundPoissonIntensitySpec,
    arrivals: &[f64],
    t: f64,
    f: &LevelFunctional,
    opts: OracleOptions,
) -> Result<f64> {
    let atoms = spec
        .jump_law
        .atoms()
        .ok_or_else(|| config("the exact oracle needs a jump law with finitely many sizes"))?;
    let mean_jumps = spec.jump_rate * t;
    let mut cap = 0;
    while 1.0 - poisson_cdf(cap, mean_jumps) > opts.jump_tail {
        cap += 1;
    }
    let start = cap;
    let mut coarse = forward_posterior(spec, &atoms, cap, arrivals, t, f)?;
    loop {
        let fine = forward_posterior(spec, &atoms, cap + 5, arrivals, t, f)?;
        let gap = (coarse - fine).abs();
        if gap <= opts.tolerance * fine.abs().max(1.0) {
            return Ok(fine);
        }
        cap += 5;
        if cap + 5 > start + opts.max_extra_jumps.max(5) {
            return Err(CoxError::Refinement {
                message: format!("jump-count truncation at {cap} is not converged"),
                bound: gap,
                tolerance: opts.tolerance,
            });
        }
        coarse = fine;
    }
}

fn forward_posterior(
    spec: &CompoundPoissonIntensitySpec,
    atoms: &[(f64, f64)],
    max_jumps: usize,
    arrivals: &[f64],
    t: f64,
    f: &LevelFunctional,
) -> Result<f64> {
    let chain = LevelChain::build(spec, atoms, max_jumps);
    let mut q = vec![0.0; chain.levels.len()];
    q[0] = 1.0;
    let mut now = 0.0;
    for s in arrivals {
        chain.evolve(&mut q, s - now);
        for (v, x) in q.iter_mut().zip(&chain.levels) {
            *v *= x;
        }
        let total: f64 = q.iter().sum();
        if !(total > 0.0) {
            return Err(degenerate());
        }
        q.iter_mut().for_each(|v| *v /= total);
        now = *s;
    }
    chain.evolve(&mut q, t - now);
    let den: f64 = q.iter().sum();
    if !(den > 0.0) {
        return Err(degenerate());
    }
    let num: f64 = q.iter().zip(&chain.levels).map(|(v, x)| v * f.apply(*x)).sum();
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::{IntensityPath, JumpLaw};
    use approx::assert_relative_eq;

    fn two_point() -> PriorSpec {
        PriorSpec::RandomLevel {
            law: LevelLaw::Discrete { values: vec![1.0, 2.0], probs: vec![0.5, 0.5] },
            horizon: 1.0,
        }
    }

    #[test]
    fn two_point_examples() {
        let o = OracleOptions::default();
        let id = LevelFunctional::Identity;
        let none = PointPattern::empty(1.0).unwrap();
        let one = PointPattern::new(vec![0.5], 1.0).unwrap();
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        let want_none = (e1 + 2.0 * e2) / (e1 + e2);
        let want_one = (e1 + 4.0 * e2) / (e1 + 2.0 * e2);
        assert_relative_eq!(grid_oracle(&two_point(), &none, &id, 1.0, o).unwrap(), want_none, max_relative = 1e-12);
        assert_relative_eq!(grid_oracle(&two_point(), &one, &id, 1.0, o).unwrap(), want_one, max_relative = 1e-12);
        assert_relative_eq!(want_none, 1.26894, epsilon = 1e-5);
        assert_relative_eq!(want_one, 1.42388, epsilon = 1e-5);
    }

    #[test]
    fn fixed_path_returns_functional() {
        let path = IntensityPath::new(vec![0.0, 0.5], vec![1.5, 3.0], 1.0).unwrap();
        let observed = PointPattern::new(vec![0.7], 1.0).unwrap();
        let v = grid_oracle(&PriorSpec::Fixed(path), &observed, &LevelFunctional::Identity, 0.8, OracleOptions::default());
        assert_eq!(v.unwrap(), 3.0);
    }

    #[test]
    fn gamma_posterior_is_conjugate() {
        let prior = PriorSpec::RandomLevel { law: LevelLaw::Gamma { shape: 2.0, scale: 0.5 }, horizon: 2.0 };
        let observed = PointPattern::new(vec![0.3, 0.4, 1.1], 2.0).unwrap();
        let v = grid_oracle(&prior, &observed, &LevelFunctional::Identity, 1.5, OracleOptions::default()).unwrap();
        assert_relative_eq!(v, 5.0 / 3.5, max_relative = 1e-15);
    }

    #[test]
    fn uniform_quadrature_matches_closed_form() {
        // Posterior on [1, 3] with no arrivals and t = 1 is proportional to e^{-x}.
        let prior = PriorSpec::RandomLevel { law: LevelLaw::Uniform { low: 1.0, high: 3.0 }, horizon: 1.0 };
        let none = PointPattern::empty(1.0).unwrap();
        let v = grid_oracle(&prior, &none, &LevelFunctional::Identity, 1.0, OracleOptions::default()).unwrap();
        let (e1, e3) = ((-1.0f64).exp(), (-3.0f64).exp());
        assert_relative_eq!(v, (2.0 * e1 - 4.0 * e3) / (e1 - e3), max_relative = 1e-10);
        let p = grid_oracle(&prior, &none, &LevelFunctional::Indicator(2.0), 1.0, OracleOptions::default()).unwrap();
        let e2 = (-2.0f64).exp();
        assert_relative_eq!(p, (e2 - e3) / (e1 - e3), max_relative = 1e-10);
    }

    #[test]
    fn compound_poisson_without_observations_matches_prior_mean() {
        // No arrivals and t = 0: the prior level x0.
        let spec = CompoundPoissonIntensitySpec {
            x0: 1.0,
            jump_rate: 1.5,
            jump_law: JumpLaw::Discrete { values: vec![0.5, 1.0], probs: vec![0.3, 0.7] },
        };
        let prior = PriorSpec::CompoundPoisson { spec, horizon: 1.0 };
        let none = PointPattern::empty(1.0).unwrap();
        let v = grid_oracle(&prior, &none, &LevelFunctional::Identity, 0.0, OracleOptions::default()).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn compound_poisson_fixed_jump_two_states() {
        // With at most one jump of size 1 at rate 1 on a short window, the
        // posterior is a two-state computation that can be done by hand:
        // weight of "no jump" is e^{-t} e^{-t}, of "jump at s" is
        // e^{-s} e^{-s} e^{-2(t-s)} integrated over s.
        let spec = CompoundPoissonIntensitySpec { x0: 1.0, jump_rate: 1.0, jump_law: JumpLaw::Fixed { value: 1.0 } };
        let prior = PriorSpec::CompoundPoisson { spec: spec.clone(), horizon: 1.0 };
        let none = PointPattern::empty(1.0).unwrap();
        let t = 1.0;
        // Full chain: levels 1 + k with killing 1 + k; P[X_t = 1 + k] weights
        // obey w_0' = -2 w_0, w_k' = w_{k-1} - (2 + k) w_k.
        let v = grid_oracle(&prior, &none, &LevelFunctional::Identity, t, OracleOptions::default()).unwrap();
        let mut w = vec![0.0; 40];
        w[0] = 1.0;
        let steps = 200_000;
        let dt = t / steps as f64;
        for _ in 0..steps {
            // classic RK4 on the linear system
            let rhs = |w: &[f64]| -> Vec<f64> {
                (0..w.len()).map(|k| (if k > 0 { w[k - 1] } else { 0.0 }) - (2.0 + k as f64) * w[k]).collect()
            };
            let k1 = rhs(&w);
            let w2: Vec<f64> = w.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
            let k2 = rhs(&w2);
            let w3: Vec<f64> = w.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
            let k3 = rhs(&w3);
            let w4: Vec<f64> = w.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
            let k4 = rhs(&w4);
            for i in 0..w.len() {
                w[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let den: f64 = w.iter().sum();
        let num: f64 = w.iter().enumerate().map(|(k, v)| (1.0 + k as f64) * v).sum();
        assert_relative_eq!(v, num / den, max_relative = 1e-10);
    }

    #[test]
    fn exponential_jumps_are_rejected() {
        let spec = CompoundPoissonIntensitySpec { x0: 1.0, jump_rate: 1.0, jump_law: JumpLaw::Exponential { mean: 1.0 } };
        let prior = PriorSpec::CompoundPoisson { spec, horizon: 1.0 };
        let none = PointPattern::empty(1.0).unwrap();
        let err = grid_oracle(&prior, &none, &LevelFunctional::Identity, 1.0, OracleOptions::default()).unwrap_err();
        assert!(matches!(err, CoxError::Config(_)));
    }

    #[test]
    fn tight_tolerance_reports_refinement() {
        let spec = CompoundPoissonIntensitySpec {
            x0: 1.0,
            jump_rate: 3.0,
            jump_law: JumpLaw::Discrete { values: vec![0.5, 2.0], probs: vec![0.5, 0.5] },
        };
        let prior = PriorSpec::CompoundPoisson { spec, horizon: 2.0 };
        let observed = PointPattern::new((1..40).map(|k| k as f64 * 0.05).collect(), 2.0).unwrap();
        let opts = OracleOptions { tolerance: 1e-14, jump_tail: 1e-2, max_extra_jumps: 5 };
        let err = grid_oracle(&prior, &observed, &LevelFunctional::Identity, 2.0, opts).unwrap_err();
        assert!(matches!(err, CoxError::Refinement { .. }), "{err:?}");
    }
}
