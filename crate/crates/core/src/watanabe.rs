//! Compensated counting process and Monte Carlo checks of its martingale
//! property.
//!
//! A simple point process is conditional Poisson with intensity `X` exactly
//! when `N_t - int_0^t X_s ds` is a local martingale, equivalently when
//! `E[int phi dN] = E[int phi X ds]` for every nonnegative predictable `phi`.
//! Both forms are turned into falsifiable estimates here: the first against a
//! finite battery of time-`r` events (plus the versions stopped at `T_n`), the
//! second with paired differences per replicate.

use std::fmt;
use std::sync::Arc;

use crate::error::{config, domain, Result};
use crate::intensity::{IntensityPath, PriorSpec};
use crate::mc::{map_replicates, CheckRow, Summary, Verdict};
use crate::scalar::Scalar;
use crate::simulation::{sample_cox_timechange, PointPattern};

/// `t -> N_t - Lambda(t)`.
#[derive(Debug, Clone, Copy)]
pub struct CompensatedPath<'a, T> {
    pattern: &'a PointPattern<T>,
    path: &'a IntensityPath<T>,
}

impl<'a, T: Scalar> CompensatedPath<'a, T> {
    pub fn value(&self, t: T) -> Result<T> {
        Ok(T::from_count(self.pattern.count(t)) - self.path.cumulative(t)?)
    }

    /// `lim_{s -> t-}` of the compensated path.
    pub fn left_limit(&self, t: T) -> Result<T> {
        Ok(T::from_count(self.pattern.count_before(t)) - self.path.cumulative(t)?)
    }

    /// Jump at `t`: one at arrivals, zero elsewhere.
    pub fn jump(&self, t: T) -> Result<T> {
        Ok(self.value(t)? - self.left_limit(t)?)
    }

    /// Value of the process stopped at `T_n` (unstopped if `T_n` does not occur).
    pub fn stopped_value(&self, t: T, n: usize) -> Result<T> {
        match self.pattern.arrival(n) {
            Some(tn) => self.value(t.min(tn)),
            None => self.value(t),
        }
    }
}

pub fn compensate<'a, T: Scalar>(
    pattern: &'a PointPattern<T>,
    path: &'a IntensityPath<T>,
) -> Result<CompensatedPath<'a, T>> {
    if pattern.horizon() != path.horizon() {
        return Err(domain(format!(
            "pattern horizon {} differs from path horizon {}",
            pattern.horizon(),
            path.horizon()
        )));
    }
    Ok(CompensatedPath { pattern, path })
}

/// Event observable at time `r`: a function of `N_r` and of the intensity
/// path (which is known from time zero).
#[derive(Debug, Clone, PartialEq)]
pub enum ConditioningEvent {
    All,
    CountEq(usize),
    CountGe(usize),
    CountLe(usize),
    LevelAbove { time: f64, threshold: f64 },
    LevelBelow { time: f64, threshold: f64 },
    And(Vec<ConditioningEvent>),
}

impl ConditioningEvent {
    pub fn holds(&self, path: &IntensityPath<f64>, pattern: &PointPattern<f64>, r: f64) -> bool {
        match self {
            ConditioningEvent::All => true,
            ConditioningEvent::CountEq(k) => pattern.count(r) == *k,
            ConditioningEvent::CountGe(k) => pattern.count(r) >= *k,
            ConditioningEvent::CountLe(k) => pattern.count(r) <= *k,
            ConditioningEvent::LevelAbove { time, threshold } => path.level_at(*time) > *threshold,
            ConditioningEvent::LevelBelow { time, threshold } => path.level_at(*time) < *threshold,
            ConditioningEvent::And(parts) => parts.iter().all(|e| e.holds(path, pattern, r)),
        }
    }

    /// Parses `all`, `count_eq:K`, `count_ge:K`, `count_le:K`,
    /// `level_above:TIME:THRESHOLD`, `level_below:TIME:THRESHOLD`, and
    /// conjunctions joined by `&`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains('&') {
            return s.split('&').map(Self::parse).collect::<Result<Vec<_>>>().map(ConditioningEvent::And);
        }
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let int = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| config(format!("event `{s}`: expected an integer argument")))
        };
        let real = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| config(format!("event `{s}`: expected a numeric argument")))
        };
        match parts[0] {
            "all" if parts.len() == 1 => Ok(ConditioningEvent::All),
            "count_eq" if parts.len() == 2 => Ok(ConditioningEvent::CountEq(int(1)?)),
            "count_ge" if parts.len() == 2 => Ok(ConditioningEvent::CountGe(int(1)?)),
            "count_le" if parts.len() == 2 => Ok(ConditioningEvent::CountLe(int(1)?)),
            "level_above" if parts.len() == 3 => Ok(ConditioningEvent::LevelAbove { time: real(1)?, threshold: real(2)? }),
            "level_below" if parts.len() == 3 => Ok(ConditioningEvent::LevelBelow { time: real(1)?, threshold: real(2)? }),
            _ => Err(config(format!("unknown conditioning event `{s}`"))),
        }
    }
}

impl fmt::Display for ConditioningEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditioningEvent::All => write!(f, "all"),
            ConditioningEvent::CountEq(k) => write!(f, "count_eq:{k}"),
            ConditioningEvent::CountGe(k) => write!(f, "count_ge:{k}"),
            ConditioningEvent::CountLe(k) => write!(f, "count_le:{k}"),
            ConditioningEvent::LevelAbove { time, threshold } => write!(f, "level_above:{time}:{threshold}"),
            ConditioningEvent::LevelBelow { time, threshold } => write!(f, "level_below:{time}:{threshold}"),
            ConditioningEvent::And(parts) => {
                let labels: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "{}", labels.join("&"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MartingaleTestConfig {
    pub r: f64,
    pub t: f64,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MartingaleReport {
    pub rows: Vec<CheckRow>,
    /// Replicates in which the conditioning event occurred, per row.
    pub hits: Vec<usize>,
}

impl MartingaleReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(CheckRow::passed)
    }
}

/// Estimates `E[(N~_t - N~_r) 1_A]` for each event `A`, and the same for the
/// process stopped at `T_n` for every `n` in `stop_at`. A row passes when the
/// estimate is within four standard errors of zero; an event that never
/// occurs is inconclusive.
pub fn martingale_test(
    prior: &PriorSpec,
    events: &[ConditioningEvent],
    stop_at: &[usize],
    cfg: MartingaleTestConfig,
) -> Result<MartingaleReport> {
    prior.validate()?;
    let MartingaleTestConfig { r, t, replicates, seed } = cfg;
    if !(r >= 0.0 && r < t && t <= prior.horizon()) {
        return Err(domain(format!("need 0 <= r < t <= {}, got r = {r}, t = {t}", prior.horizon())));
    }
    if replicates == 0 {
        return Err(config("replicates must be at least 1"));
    }
    let stops: Vec<Option<usize>> = std::iter::once(None).chain(stop_at.iter().map(|n| Some(*n))).collect();

    let per_replicate = map_replicates(replicates, seed, |_, rng| {
        let path = prior.draw(rng);
        let pattern = sample_cox_timechange(&path, rng);
        let comp = compensate(&pattern, &path).expect("shared horizon");
        let mut out = Vec::with_capacity(events.len() * stops.len());
        for event in events {
            let hit = event.holds(&path, &pattern, r);
            for stop in &stops {
                let inc = match stop {
                    None => comp.value(t).unwrap() - comp.value(r).unwrap(),
                    Some(n) => comp.stopped_value(t, *n).unwrap() - comp.stopped_value(r, *n).unwrap(),
                };
                out.push((if hit { inc } else { 0.0 }, hit));
            }
        }
        out
    });

    let mut rows = Vec::new();
    let mut hits = Vec::new();
    let mut column = Vec::with_capacity(replicates);
    for (ei, event) in events.iter().enumerate() {
        for (si, stop) in stops.iter().enumerate() {
            let idx = ei * stops.len() + si;
            column.clear();
            column.extend(per_replicate.iter().map(|v| v[idx].0));
            let hit_count = per_replicate.iter().filter(|v| v[idx].1).count();
            let s = Summary::of(&column);
            let name = match stop {
                None => event.to_string(),
                Some(n) => format!("{event}|stopped_at_T{n}"),
            };
            let mut row = CheckRow::banded(name, s.mean, 0.0, s.std_error);
            if hit_count == 0 {
                row.verdict = Verdict::Inconclusive;
            }
            rows.push(row);
            hits.push(hit_count);
        }
    }
    Ok(MartingaleReport { rows, hits })
}

/// Rule giving the value of a simple predictable process on a grid cell from
/// the information available at the start of the cell.
#[derive(Clone)]
pub enum PredictableRule {
    Constant(f64),
    /// `1{N_{s_{j-1}} = 0}`.
    NoArrivalYet,
    /// `1 + N_{s_{j-1}}`.
    CountPlusOne,
    /// `X_{s_{j-1}}`.
    LevelAtCellStart,
    /// Arbitrary rule of (cell index, arrivals up to the cell start, path).
    Custom(Arc<dyn Fn(usize, &PointPattern<f64>, &IntensityPath<f64>) -> f64 + Send + Sync>),
}

impl fmt::Debug for PredictableRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictableRule::Constant(c) => write!(f, "Constant({c})"),
            PredictableRule::NoArrivalYet => write!(f, "NoArrivalYet"),
            PredictableRule::CountPlusOne => write!(f, "CountPlusOne"),
            PredictableRule::LevelAtCellStart => write!(f, "LevelAtCellStart"),
            PredictableRule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl PredictableRule {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "no_arrival_yet" => Ok(PredictableRule::NoArrivalYet),
            "count_plus_one" => Ok(PredictableRule::CountPlusOne),
            "level_at_cell_start" => Ok(PredictableRule::LevelAtCellStart),
            _ => match s.strip_prefix("constant:").map(|c| c.trim().parse::<f64>()) {
                Some(Ok(c)) if c >= 0.0 => Ok(PredictableRule::Constant(c)),
                _ => Err(config(format!("unknown predictable rule `{s}`"))),
            },
        }
    }
}

/// Step process `phi = sum_j v_j 1_{(s_{j-1}, s_j]}` where `v_j` only sees the
/// arrivals up to `s_{j-1}`.
#[derive(Debug, Clone)]
pub struct SimplePredictableProcess {
    grid: Vec<f64>,
    rule: PredictableRule,
}

impl SimplePredictableProcess {
    pub fn new(grid: Vec<f64>, rule: PredictableRule) -> Result<Self> {
        if grid.len() < 2 || grid[0] != 0.0 || grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(config("predictable grid must start at 0 and increase strictly"));
        }
        Ok(Self { grid, rule })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Cell values `v_1..v_m`; each rule evaluation gets the pattern
    /// truncated at the cell start.
    pub fn values(&self, pattern: &PointPattern<f64>, path: &IntensityPath<f64>) -> Vec<f64> {
        (1..self.grid.len())
            .map(|j| {
                let start = self.grid[j - 1];
                let past = pattern.truncated(start);
                let v = match &self.rule {
                    PredictableRule::Constant(c) => *c,
                    PredictableRule::NoArrivalYet => f64::from(past.is_empty() as u8),
                    PredictableRule::CountPlusOne => 1.0 + past.len() as f64,
                    PredictableRule::LevelAtCellStart => path.level_at(start),
                    PredictableRule::Custom(f) => f(j, &past, path),
                };
                v.max(0.0)
            })
            .collect()
    }

    /// `int phi dN = sum_k phi(T_k)`.
    pub fn integrate_counts(&self, values: &[f64], pattern: &PointPattern<f64>) -> f64 {
        let mut acc = 0.0;
        for t in pattern.arrivals() {
            // cell j covers (s_{j-1}, s_j]
            let j = self.grid.partition_point(|s| s < t);
            if j >= 1 && j < self.grid.len() {
                acc += values[j - 1];
            }
        }
        acc
    }

    /// `int phi X ds`, exact.
    pub fn integrate_intensity(&self, values: &[f64], path: &IntensityPath<f64>) -> f64 {
        values
            .iter()
            .zip(self.grid.windows(2))
            .map(|(v, w)| v * path.integral(w[0], w[1]))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct PredictableReport {
    pub counts_side: Summary,
    pub intensity_side: Summary,
    pub difference: Summary,
    pub row: CheckRow,
}

impl PredictableReport {
    pub fn passed(&self) -> bool {
        self.row.passed()
    }

    pub fn rows(&self) -> Vec<CheckRow> {
        vec![
            CheckRow {
                name: "int_phi_dN".into(),
                estimate: self.counts_side.mean,
                target: self.intensity_side.mean,
                std_error: self.counts_side.std_error,
                verdict: Verdict::Pass,
            },
            CheckRow {
                name: "int_phi_X_ds".into(),
                estimate: self.intensity_side.mean,
                target: self.intensity_side.mean,
                std_error: self.intensity_side.std_error,
                verdict: Verdict::Pass,
            },
            self.row.clone(),
        ]
    }
}

/// Paired Monte Carlo check of `E[int phi dN] = E[int phi X ds]`.
pub fn predictable_integral_test(
    prior: &PriorSpec,
    phi: &SimplePredictableProcess,
    replicates: usize,
    seed: u64,
) -> Result<PredictableReport> {
    prior.validate()?;
    if *phi.grid.last().unwrap() > prior.horizon() {
        return Err(domain("predictable grid extends past the horizon"));
    }
    if replicates == 0 {
        return Err(config("replicates must be at least 1"));
    }
    let sides = map_replicates(replicates, seed, |_, rng| {
        let path = prior.draw(rng);
        let pattern = sample_cox_timechange(&path, rng);
        let values = phi.values(&pattern, &path);
        (phi.integrate_counts(&values, &pattern), phi.integrate_intensity(&values, &path))
    });
    let lhs: Vec<f64> = sides.iter().map(|s| s.0).collect();
    let rhs: Vec<f64> = sides.iter().map(|s| s.1).collect();
    let diff: Vec<f64> = sides.iter().map(|s| s.0 - s.1).collect();
    let difference = Summary::of(&diff);
    Ok(PredictableReport {
        counts_side: Summary::of(&lhs),
        intensity_side: Summary::of(&rhs),
        row: CheckRow::banded("paired_difference", difference.mean, 0.0, difference.std_error),
        difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::LevelLaw;

    fn constant_prior(level: f64, horizon: f64) -> PriorSpec {
        PriorSpec::Fixed(IntensityPath::constant(level, horizon).unwrap())
    }

    #[test]
    fn compensate_examples() {
        let zero = IntensityPath::zero(2.0).unwrap();
        let empty = PointPattern::empty(2.0).unwrap();
        let c = compensate(&empty, &zero).unwrap();
        for t in [0.0, 0.5, 2.0] {
            assert_eq!(c.value(t).unwrap(), 0.0);
        }

        let unit = IntensityPath::constant(1.0, 2.0).unwrap();
        let one = PointPattern::new(vec![0.5], 2.0).unwrap();
        let c = compensate(&one, &unit).unwrap();
        assert_eq!(c.value(1.0).unwrap(), 0.0);
        assert_eq!(c.jump(0.5).unwrap(), 1.0);
        assert_eq!(c.jump(0.7).unwrap(), 0.0);

        let other = IntensityPath::constant(1.0, 3.0).unwrap();
        assert!(matches!(compensate(&one, &other), Err(crate::CoxError::Domain(_))));
    }

    #[test]
    fn event_parsing_round_trips() {
        for s in ["all", "count_eq:0", "count_ge:2", "level_above:0.5:1.5", "count_le:1&level_below:0:2"] {
            let e = ConditioningEvent::parse(s).unwrap();
            assert_eq!(ConditioningEvent::parse(&e.to_string()).unwrap(), e);
        }
        assert!(ConditioningEvent::parse("count_eq:x").is_err());
        assert!(ConditioningEvent::parse("bogus").is_err());
    }

    #[test]
    fn zero_intensity_is_exactly_zero() {
        let prior = PriorSpec::Fixed(IntensityPath::zero(1.0).unwrap());
        let cfg = MartingaleTestConfig { r: 0.0, t: 1.0, replicates: 1000, seed: 1 };
        let report = martingale_test(&prior, &[ConditioningEvent::All], &[], cfg).unwrap();
        assert_eq!(report.rows[0].estimate, 0.0);
        assert_eq!(report.rows[0].std_error, 0.0);
        assert!(report.passed());
    }

    #[test]
    fn never_occurring_event_is_inconclusive() {
        let prior = constant_prior(1.0, 1.0);
        let cfg = MartingaleTestConfig { r: 0.5, t: 1.0, replicates: 500, seed: 2 };
        let ev = ConditioningEvent::LevelAbove { time: 0.0, threshold: 10.0 };
        let report = martingale_test(&prior, &[ev], &[], cfg).unwrap();
        assert_eq!(report.rows[0].verdict, Verdict::Inconclusive);
        assert!(report.passed());
    }

    #[test]
    fn unit_rate_martingale() {
        let prior = constant_prior(1.0, 1.0);
        let cfg = MartingaleTestConfig { r: 0.0, t: 1.0, replicates: 100_000, seed: 3 };
        let report = martingale_test(&prior, &[ConditioningEvent::All], &[1, 2], cfg).unwrap();
        assert!(report.passed(), "{:?}", report.rows);
        assert_eq!(report.rows.len(), 3);
    }

    #[test]
    fn conditioning_on_past_of_random_level() {
        let prior = PriorSpec::RandomLevel {
            law: LevelLaw::Discrete { values: vec![1.0, 2.0], probs: vec![0.5, 0.5] },
            horizon: 1.0,
        };
        let cfg = MartingaleTestConfig { r: 0.5, t: 1.0, replicates: 100_000, seed: 4 };
        let events = [ConditioningEvent::CountEq(0), ConditioningEvent::CountGe(1)];
        let report = martingale_test(&prior, &events, &[1], cfg).unwrap();
        assert!(report.passed(), "{:?}", report.rows);
    }

    #[test]
    fn wrong_compensator_is_detected() {
        // Claim rate 1 but simulate rate 1.2: the increment has mean 0.2.
        let path = IntensityPath::constant(1.2, 1.0).unwrap();
        let claimed = IntensityPath::constant(1.0, 1.0).unwrap();
        let diffs: Vec<f64> = crate::mc::map_replicates(100_000, 5, |_, rng| {
            let p = sample_cox_timechange(&path, rng);
            compensate(&p, &claimed).unwrap().value(1.0).unwrap()
        });
        let s = Summary::of(&diffs);
        assert!(!crate::mc::within_band(s.mean, 0.0, s.std_error));
    }

    #[test]
    fn predictable_examples() {
        let prior = constant_prior(2.0, 3.0);
        let ones = SimplePredictableProcess::new(vec![0.0, 1.0, 3.0], PredictableRule::Constant(1.0)).unwrap();
        let rep = predictable_integral_test(&prior, &ones, 100_000, 6).unwrap();
        assert!(rep.passed());
        assert!((rep.intensity_side.mean - 6.0).abs() < 1e-12);

        let zeros = SimplePredictableProcess::new(vec![0.0, 3.0], PredictableRule::Constant(0.0)).unwrap();
        let rep = predictable_integral_test(&prior, &zeros, 1000, 6).unwrap();
        assert_eq!(rep.difference.mean, 0.0);
        assert!(rep.passed());

        let gate = SimplePredictableProcess::new(vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0], PredictableRule::NoArrivalYet).unwrap();
        let rep = predictable_integral_test(&prior, &gate, 100_000, 7).unwrap();
        assert!(rep.passed(), "{:?}", rep.row);
    }

    #[test]
    fn cell_lookup_is_left_open() {
        let phi = SimplePredictableProcess::new(vec![0.0, 1.0, 2.0], PredictableRule::Constant(1.0)).unwrap();
        let pattern = PointPattern::new(vec![1.0, 1.5], 2.0).unwrap();
        assert_eq!(phi.integrate_counts(&[10.0, 100.0], &pattern), 110.0);
    }

    #[test]
    fn values_only_see_the_past() {
        let path = IntensityPath::constant(1.0, 2.0).unwrap();
        let pattern = PointPattern::new(vec![0.5, 1.5], 2.0).unwrap();
        let phi = SimplePredictableProcess::new(vec![0.0, 1.0, 1.5, 2.0], PredictableRule::CountPlusOne).unwrap();
        // N_{1.5} counts the arrival at 1.5 itself
        assert_eq!(phi.values(&pattern, &path), vec![1.0, 2.0, 3.0]);
    }
}
