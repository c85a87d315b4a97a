//! Intensity change by change of measure.
//!
//! For a multiplier `Y` that is known at time zero, the stochastic exponential
//!
//! ```text
//! Z_t = exp(-int_0^t (Y_s - 1) X_s ds) * prod_{T_k <= t} Y_{T_k}
//! ```
//!
//! has expectation one, and reweighting by `Z_S` turns `N` into a conditional
//! Poisson process with intensity `Y X` up to `S`. Here `S` is the horizon.
//! All weights are carried as logarithms.

use crate::error::{config, domain, Result};
use crate::intensity::{IntensityPath, PriorSpec};
use crate::mc::{effective_sample_size, map_replicates, pairwise_sum, within_band, CheckRow, Summary, Verdict};
use crate::scalar::Scalar;
use crate::simulation::{continue_timechange, sample_cox_timechange, PointPattern};
use crate::special::{ln_factorial, poisson_pmf};

fn check_shared_horizon<T: Scalar>(x: &IntensityPath<T>, y: &IntensityPath<T>, pattern: &PointPattern<T>) -> Result<()> {
    if x.horizon() != y.horizon() || x.horizon() != pattern.horizon() {
        return Err(domain("intensity, multiplier and pattern must share a horizon"));
    }
    Ok(())
}

/// `int_r^t (Y_s - 1) X_s ds`, summed over the merged breakpoint grid.
pub fn excess_integral<T: Scalar>(x: &IntensityPath<T>, y: &IntensityPath<T>, r: T, t: T) -> T {
    let (xb, yb) = (x.breakpoints(), y.breakpoints());
    let (mut i, mut j) = (0, 0);
    let mut start = T::zero();
    let mut acc = T::zero();
    loop {
        let next_x = xb.get(i + 1).copied().unwrap_or(T::infinity());
        let next_y = yb.get(j + 1).copied().unwrap_or(T::infinity());
        let end = next_x.min(next_y);
        let lo = start.max(r);
        let hi = end.min(t);
        if hi > lo {
            acc = acc + (y.levels()[j] - T::one()) * x.levels()[i] * (hi - lo);
        }
        if end >= t {
            return acc;
        }
        if next_x == end {
            i += 1;
        }
        if next_y == end {
            j += 1;
        }
        start = end;
    }
}

/// `log Z_t - log Z_r`: the compensator part over `(r, t]` plus `log Y` at
/// every arrival in `(r, t]`; `-inf` if `Y` vanishes at one of them.
pub fn log_increment<T: Scalar>(
    x: &IntensityPath<T>,
    y: &IntensityPath<T>,
    pattern: &PointPattern<T>,
    r: T,
    t: T,
) -> Result<T> {
    check_shared_horizon(x, y, pattern)?;
    if !(r >= T::zero() && r <= t && t <= x.horizon()) {
        return Err(domain(format!("need 0 <= r <= t <= {}, got r = {r}, t = {t}", x.horizon())));
    }
    let mut log_z = -excess_integral(x, y, r, t);
    for tk in &pattern.arrivals()[pattern.count(r)..pattern.count(t)] {
        log_z = log_z + y.level_at(*tk).ln();
    }
    Ok(log_z)
}

/// `log Z_t`.
pub fn stochastic_exponential<T: Scalar>(
    x: &IntensityPath<T>,
    y: &IntensityPath<T>,
    pattern: &PointPattern<T>,
    t: T,
) -> Result<T> {
    log_increment(x, y, pattern, T::zero(), t)
}

/// One simulated `(X, Y, N)` triple with its log weight `log Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub path: IntensityPath<f64>,
    pub multiplier: IntensityPath<f64>,
    pub pattern: PointPattern<f64>,
    pub log_weight: f64,
}

impl WeightedSample {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// How the multiplier `Y` is obtained from the drawn intensity path.
#[derive(Debug, Clone, PartialEq)]
pub enum YRule {
    Constant(f64),
    /// `Y = c / X`; requires strictly positive paths.
    Reciprocal(f64),
    /// A fixed step function, independent of `X`.
    Table(IntensityPath<f64>),
}

impl YRule {
    /// Rejects rules that cannot be applied to every draw of `prior`.
    pub fn validate_for(&self, prior: &PriorSpec) -> Result<()> {
        match self {
            YRule::Constant(c) if !(c.is_finite() && *c >= 0.0) => {
                Err(config(format!("y_rule constant must be finite and nonnegative, got {c}")))
            }
            YRule::Reciprocal(c) if !(c.is_finite() && *c >= 0.0) => {
                Err(config(format!("y_rule reciprocal scale must be finite and nonnegative, got {c}")))
            }
            YRule::Reciprocal(_) if prior.admits_zero_levels() => {
                Err(config("y_rule reciprocal needs a prior with strictly positive levels"))
            }
            YRule::Table(p) if p.horizon() != prior.horizon() => {
                Err(config("y_rule table horizon differs from the prior horizon"))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, x: &IntensityPath<f64>) -> Result<IntensityPath<f64>> {
        match self {
            YRule::Constant(c) => IntensityPath::constant(*c, x.horizon()),
            YRule::Reciprocal(c) => {
                if x.has_zero_level() {
                    return Err(config("y_rule reciprocal applied to a path with a zero level"));
                }
                x.map_levels(|l| c / l)
            }
            YRule::Table(p) => {
                if p.horizon() != x.horizon() {
                    return Err(config("y_rule table horizon differs from the path horizon"));
                }
                Ok(p.clone())
            }
        }
    }

    /// Parses `constant:C`, `reciprocal` / `reciprocal:C`, or
    /// `table:T0=L0,T1=L1,...` (breakpoints must start at 0).
    pub fn parse(s: &str, horizon: f64) -> Result<Self> {
        let s = s.trim();
        let bad = || config(format!("unknown y_rule `{s}`"));
        if s == "reciprocal" {
            return Ok(YRule::Reciprocal(1.0));
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "constant" => arg.trim().parse().map(YRule::Constant).map_err(|_| bad()),
            "reciprocal" => arg.trim().parse().map(YRule::Reciprocal).map_err(|_| bad()),
            "table" => {
                let mut bps = Vec::new();
                let mut levels = Vec::new();
                for item in arg.split(',') {
                    let (t, l) = item.split_once('=').ok_or_else(bad)?;
                    bps.push(t.trim().parse::<f64>().map_err(|_| bad())?);
                    levels.push(l.trim().parse::<f64>().map_err(|_| bad())?);
                }
                IntensityPath::new(bps, levels, horizon)
                    .map(YRule::Table)
                    .map_err(|e| config(format!("y_rule table: {e}")))
            }
            _ => Err(bad()),
        }
    }
}

fn draw_weighted<R: rand::Rng + ?Sized>(prior: &PriorSpec, rule: &YRule, weight_time: f64, rng: &mut R) -> WeightedSample {
    let path = prior.draw(rng);
    let multiplier = rule.apply(&path).expect("rule validated against the prior");
    let pattern = sample_cox_timechange(&path, rng);
    let log_weight = stochastic_exponential(&path, &multiplier, &pattern, weight_time).expect("shared horizon");
    WeightedSample { path, multiplier, pattern, log_weight }
}

#[derive(Debug, Clone)]
pub struct ExpectationReport {
    pub summary: Summary,
    /// Largest `Z_t` seen; a heavy-tail diagnostic.
    pub max_weight: f64,
    pub effective_sample_size: f64,
    pub row: CheckRow,
}

impl ExpectationReport {
    pub fn passed(&self) -> bool {
        self.row.passed()
    }
}

/// Monte Carlo check that `E[Z_t] = 1`.
pub fn expectation_of_z_test(
    prior: &PriorSpec,
    rule: &YRule,
    t: f64,
    replicates: usize,
    seed: u64,
) -> Result<ExpectationReport> {
    prior.validate()?;
    rule.validate_for(prior)?;
    if !(t >= 0.0 && t <= prior.horizon()) {
        return Err(domain(format!("t = {t} outside [0, {}]", prior.horizon())));
    }
    if replicates == 0 {
        return Err(config("replicates must be at least 1"));
    }
    let weights: Vec<f64> = map_replicates(replicates, seed, |_, rng| draw_weighted(prior, rule, t, rng).weight());
    let summary = Summary::of(&weights);
    let max_weight = weights.iter().cloned().fold(0.0, f64::max);
    Ok(ExpectationReport {
        row: CheckRow::banded(format!("E[Z_{t}]"), summary.mean, 1.0, summary.std_error),
        summary,
        max_weight,
        effective_sample_size: effective_sample_size(&weights),
    })
}

/// Range of increment counts pooled into one cell; `hi = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountCell {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl CountCell {
    fn contains(&self, n: usize) -> bool {
        n >= self.lo && self.hi.is_none_or(|hi| n <= hi)
    }

    fn probability(&self, mean: f64) -> f64 {
        match self.hi {
            Some(hi) => (self.lo..=hi).map(|k| poisson_pmf(k, mean)).sum(),
            None => {
                let below: f64 = (0..self.lo).map(|k| poisson_pmf(k, mean)).sum();
                (1.0 - below).max(0.0)
            }
        }
    }

    fn label(&self) -> String {
        match self.hi {
            Some(hi) if hi == self.lo => format!("n={}", self.lo),
            Some(hi) => format!("n={}..{}", self.lo, hi),
            None => format!("n>={}", self.lo),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReweightedLawConfig {
    /// Largest count given its own cell before the open tail cell.
    pub n_max: usize,
    /// Cells with fewer expected hits are pooled with their neighbours.
    pub min_expected: f64,
    /// Cells whose hit weights have a smaller Kish effective size are pooled
    /// too; a handful of heavy weights makes the standard error unreliable.
    pub min_effective: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for ReweightedLawConfig {
    fn default() -> Self {
        Self { n_max: 8, min_expected: 25.0, min_effective: 100.0, replicates: 100_000, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct ReweightedLawReport {
    pub rows: Vec<CheckRow>,
    pub effective_sample_size: f64,
}

impl ReweightedLawReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(CheckRow::passed)
    }
}

/// Compares `E[Z_S 1{N_t - N_r in cell}]` with the average Poisson
/// probability of the cell under mean `int_r^t Y X` (per drawn path), for
/// every interval and count cell; paired per replicate.
pub fn reweighted_law_test(
    prior: &PriorSpec,
    rule: &YRule,
    intervals: &[(f64, f64)],
    cfg: ReweightedLawConfig,
) -> Result<ReweightedLawReport> {
    prior.validate()?;
    rule.validate_for(prior)?;
    let horizon = prior.horizon();
    if let Some((r, t)) = intervals.iter().find(|(r, t)| !(*r >= 0.0 && r < t && *t <= horizon)) {
        return Err(domain(format!("interval ({r}, {t}] not inside [0, {horizon}]")));
    }
    if cfg.replicates == 0 {
        return Err(config("replicates must be at least 1"));
    }
    struct Draw {
        weight: f64,
        counts: Vec<usize>,
        means: Vec<f64>,
        base_means: Vec<f64>,
    }
    let draws: Vec<Draw> = map_replicates(cfg.replicates, cfg.seed, |_, rng| {
        let s = draw_weighted(prior, rule, horizon, rng);
        let product = s.path.product(&s.multiplier).expect("shared horizon");
        Draw {
            weight: s.weight(),
            counts: intervals.iter().map(|(r, t)| s.pattern.count(*t) - s.pattern.count(*r)).collect(),
            means: intervals.iter().map(|(r, t)| product.integral(*r, *t)).collect(),
            base_means: intervals.iter().map(|(r, t)| s.path.integral(*r, *t)).collect(),
        }
    });
    let weights: Vec<f64> = draws.iter().map(|d| d.weight).collect();

    let mut rows = Vec::new();
    for (i, (r, t)) in intervals.iter().enumerate() {
        // A cell needs enough expected hits under both laws: rare under the
        // sampling law means no hits, rare under the target law means a few
        // heavy weights carry the estimate and its standard error.
        let raw: Vec<CountCell> = (0..=cfg.n_max)
            .map(|n| CountCell { lo: n, hi: Some(n) })
            .chain(std::iter::once(CountCell { lo: cfg.n_max + 1, hi: None }))
            .collect();
        let expected: Vec<f64> = raw
            .iter()
            .map(|c| {
                let base: f64 = draws.iter().map(|d| c.probability(d.base_means[i])).sum();
                let reweighted: f64 = draws.iter().map(|d| c.probability(d.means[i])).sum();
                base.min(reweighted)
            })
            .collect();
        let moments: Vec<(f64, f64)> = raw
            .iter()
            .map(|c| {
                let w: Vec<f64> = draws.iter().filter(|d| c.contains(d.counts[i])).map(|d| d.weight).collect();
                let sq: Vec<f64> = w.iter().map(|x| x * x).collect();
                (pairwise_sum(&w), pairwise_sum(&sq))
            })
            .collect();
        let groups = pool_weighted_cells(&expected, &moments, cfg.min_expected, cfg.min_effective);
        let n_groups = groups.iter().max().map_or(0, |g| g + 1);
        for g in 0..n_groups {
            let members: Vec<&CountCell> = raw.iter().zip(&groups).filter(|(_, gg)| **gg == g).map(|(c, _)| c).collect();
            let cell = CountCell { lo: members[0].lo, hi: members.last().unwrap().hi };
            let hit: Vec<f64> = draws
                .iter()
                .map(|d| if cell.contains(d.counts[i]) { d.weight } else { 0.0 })
                .collect();
            let target: Vec<f64> = draws.iter().map(|d| cell.probability(d.means[i])).collect();
            let diff: Vec<f64> = hit.iter().zip(&target).map(|(a, b)| a - b).collect();
            let (h, tg, df) = (Summary::of(&hit), Summary::of(&target), Summary::of(&diff));
            rows.push(CheckRow {
                name: format!("({r},{t}]:{}", cell.label()),
                estimate: h.mean,
                target: tg.mean,
                std_error: df.std_error,
                verdict: Verdict::from_pass(within_band(df.mean, 0.0, df.std_error)),
            });
        }
    }
    Ok(ReweightedLawReport { rows, effective_sample_size: effective_sample_size(&weights) })
}

/// Groups consecutive cells until each group has `min_expected` expected hits
/// and its hit weights (given as sum and sum of squares) have Kish effective
/// size `min_effective`; a short final group joins its predecessor.
fn pool_weighted_cells(expected: &[f64], moments: &[(f64, f64)], min_expected: f64, min_effective: f64) -> Vec<usize> {
    let mut group_of = vec![0; expected.len()];
    let (mut group, mut last_closed) = (0, None);
    let (mut e, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let full = |e: f64, s1: f64, s2: f64| e >= min_expected && s2 > 0.0 && s1 * s1 / s2 >= min_effective;
    for (i, (x, (m1, m2))) in expected.iter().zip(moments).enumerate() {
        group_of[i] = group;
        e += x;
        s1 += m1;
        s2 += m2;
        if full(e, s1, s2) {
            last_closed = Some(group);
            group += 1;
            (e, s1, s2) = (0.0, 0.0, 0.0);
        }
    }
    if !full(e, s1, s2) {
        if let Some(prev) = last_closed {
            for g in group_of.iter_mut().filter(|g| **g > prev) {
                *g = prev;
            }
        }
    }
    group_of
}

#[derive(Debug, Clone, Copy)]
pub struct InductionConfig {
    pub t: f64,
    /// Total number of arrivals `n` in `{N_t = n}`.
    pub n: usize,
    /// Conditioning on `F_{T_{n-j}}`.
    pub j: usize,
    pub outer: usize,
    pub inner: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct InductionReport {
    pub lhs: Summary,
    pub rhs: Summary,
    pub difference: Summary,
    pub row: CheckRow,
}

impl InductionReport {
    pub fn passed(&self) -> bool {
        self.row.passed()
    }
}

/// Closed form of `E[prod_{k<=n} Y_{T_k} 1{N_t = n} | F_{T_{n-j}}]` given
/// the first `n - j` arrivals (all at or before `t`, the last at `from`).
pub fn induction_rhs(
    x: &IntensityPath<f64>,
    y: &IntensityPath<f64>,
    prefix: &[f64],
    from: f64,
    t: f64,
    j: usize,
) -> f64 {
    if from > t {
        return 0.0;
    }
    let lx = x.integral(from, t);
    let lyx = excess_integral(x, y, from, t) + lx;
    let ln_poly = if j == 0 {
        0.0
    } else if lyx == 0.0 {
        f64::NEG_INFINITY
    } else {
        j as f64 * lyx.ln() - ln_factorial::<f64>(j)
    };
    let past: f64 = prefix.iter().map(|tk| y.level_at(*tk)).product();
    (-lx + ln_poly).exp() * past
}

/// Nested Monte Carlo check of the identity behind `E[Z_t] = 1`: for each
/// outer draw of `(X, T_1..T_{n-j})` the inner loop continues the process
/// `inner` times and averages `prod Y_{T_k} 1{N_t = n}`, which is compared
/// with [`induction_rhs`].
pub fn induction_identity_test(prior: &PriorSpec, rule: &YRule, cfg: InductionConfig) -> Result<InductionReport> {
    prior.validate()?;
    rule.validate_for(prior)?;
    let InductionConfig { t, n, j, outer, inner, seed } = cfg;
    if n > 5 || j > n {
        return Err(domain(format!("need j <= n <= 5, got n = {n}, j = {j}")));
    }
    if !(t > 0.0 && t <= prior.horizon()) {
        return Err(domain(format!("t = {t} outside (0, {}]", prior.horizon())));
    }
    if outer == 0 || inner == 0 {
        return Err(config("outer and inner replicate counts must be positive"));
    }
    let sides = map_replicates(outer, seed, |_, rng| {
        let path = prior.draw(rng);
        let y = rule.apply(&path).expect("rule validated against the prior");
        let first = sample_cox_timechange(&path, rng);
        let known = n - j;
        let from = match first.arrival(known) {
            Some(tk) if tk <= t => tk,
            _ => return (0.0, 0.0),
        };
        let prefix = first.truncated(from);
        let rhs = induction_rhs(&path, &y, prefix.arrivals(), from, t, j);
        let mut acc = 0.0;
        for _ in 0..inner {
            let full = continue_timechange(&path, prefix.clone(), from, rng);
            if full.count(t) == n {
                acc += full.arrivals()[..n].iter().map(|tk| y.level_at(*tk)).product::<f64>();
            }
        }
        (acc / inner as f64, rhs)
    });
    let lhs: Vec<f64> = sides.iter().map(|s| s.0).collect();
    let rhs: Vec<f64> = sides.iter().map(|s| s.1).collect();
    let diff: Vec<f64> = sides.iter().map(|s| s.0 - s.1).collect();
    let (l, r, d) = (Summary::of(&lhs), Summary::of(&rhs), Summary::of(&diff));
    Ok(InductionReport {
        row: CheckRow {
            name: format!("induction(n={n},j={j},t={t})"),
            estimate: l.mean,
            target: r.mean,
            std_error: d.std_error,
            verdict: Verdict::from_pass(within_band(d.mean, 0.0, d.std_error)),
        },
        lhs: l,
        rhs: r,
        difference: d,
    })
}
