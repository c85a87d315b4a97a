//! Piecewise-constant intensity paths and the priors that generate them.
//!
//! A path holds level `levels[j]` on `[breakpoints[j], breakpoints[j + 1])`,
//! the last level running up to the horizon. Cumulative integrals and their
//! inverse are exact sums of rate-times-duration products.
//!
//! Beyond the horizon the last level is extended to `+inf`; this gives the
//! integral `int_r^inf X ds` used by the arrival-time atoms a definite value
//! (finite only when the last level is zero).

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{config, domain, Result};
use crate::scalar::Scalar;

/// Nonnegative right-continuous step function on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityPath<T> {
    breakpoints: Vec<T>,
    levels: Vec<T>,
    horizon: T,
    /// `cumulative[j]` is the integral up to `breakpoints[j]`; the final
    /// entry is the integral up to the horizon.
    cumulative: Vec<T>,
}

impl<T: Scalar> IntensityPath<T> {
    pub fn new(breakpoints: Vec<T>, levels: Vec<T>, horizon: T) -> Result<Self> {
        if !(horizon.is_finite() && horizon > T::zero()) {
            return Err(domain(format!("horizon must be positive and finite, got {horizon}")));
        }
        if breakpoints.is_empty() {
            return Err(domain("path needs at least one breakpoint"));
        }
        if breakpoints.len() != levels.len() {
            return Err(domain(format!(
                "{} breakpoints but {} levels",
                breakpoints.len(),
                levels.len()
            )));
        }
        if breakpoints[0] != T::zero() {
            return Err(domain("first breakpoint must be 0"));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(domain("breakpoints must be strictly increasing"));
        }
        if !(*breakpoints.last().unwrap() < horizon) {
            return Err(domain("breakpoints must lie below the horizon"));
        }
        if let Some(bad) = levels.iter().find(|l| !(l.is_finite() && **l >= T::zero())) {
            return Err(domain(format!("levels must be finite and nonnegative, got {bad}")));
        }

        let mut cumulative = Vec::with_capacity(levels.len() + 1);
        let mut acc = T::zero();
        cumulative.push(acc);
        for j in 0..levels.len() {
            let end = breakpoints.get(j + 1).copied().unwrap_or(horizon);
            acc = acc + levels[j] * (end - breakpoints[j]);
            cumulative.push(acc);
        }
        Ok(Self {
            breakpoints,
            levels,
            horizon,
            cumulative,
        })
    }

    pub fn constant(level: T, horizon: T) -> Result<Self> {
        Self::new(vec![T::zero()], vec![level], horizon)
    }

    pub fn zero(horizon: T) -> Result<Self> {
        Self::constant(T::zero(), horizon)
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    /// Pieces `(start, end, level)` covering `[0, horizon]`.
    pub fn pieces(&self) -> impl Iterator<Item = (T, T, T)> + '_ {
        (0..self.levels.len()).map(move |j| (self.breakpoints[j], self.piece_end(j), self.levels[j]))
    }

    fn piece_end(&self, j: usize) -> T {
        self.breakpoints.get(j + 1).copied().unwrap_or(self.horizon)
    }

    /// Index of the piece containing `t` (right-continuous; `t >= horizon`
    /// maps to the last piece).
    fn segment(&self, t: T) -> usize {
        self.breakpoints.partition_point(|b| *b <= t).saturating_sub(1)
    }

    /// `X_t`, right-continuous; the last level extends past the horizon.
    pub fn level_at(&self, t: T) -> T {
        self.levels[self.segment(t)]
    }

    /// `Lambda(t) = int_0^t X_s ds` for `t` in `[0, horizon]`.
    pub fn cumulative(&self, t: T) -> Result<T> {
        if !(t >= T::zero() && t <= self.horizon) {
            return Err(domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(self.cumulative_extended(t))
    }

    /// Cumulative integral with the last level extended beyond the horizon.
    /// Returns `+inf` at `t = +inf` unless the last level is zero.
    pub fn cumulative_extended(&self, t: T) -> T {
        if t <= T::zero() {
            return T::zero();
        }
        if t.is_infinite() {
            return if *self.levels.last().unwrap() > T::zero() {
                T::infinity()
            } else {
                self.total()
            };
        }
        let j = self.segment(t);
        let start = self.breakpoints[j];
        self.cumulative[j] + self.levels[j] * (t - start)
    }

    /// `int_r^t X_s ds` under the tail extension; `t` may be `+inf`.
    pub fn integral(&self, r: T, t: T) -> T {
        if t.is_infinite() {
            return self.tail_integral(r);
        }
        self.cumulative_extended(t) - self.cumulative_extended(r)
    }

    /// `int_r^inf X_s ds` under the tail extension.
    pub fn tail_integral(&self, r: T) -> T {
        if *self.levels.last().unwrap() > T::zero() {
            T::infinity()
        } else {
            let r = r.min(self.horizon);
            self.total() - self.cumulative_extended(r)
        }
    }

    /// `Lambda(horizon)`.
    pub fn total(&self) -> T {
        *self.cumulative.last().unwrap()
    }

    /// Smallest `t` with `Lambda(t) >= u`, or `None` when `u > Lambda(horizon)`.
    pub fn inverse_cumulative(&self, u: T) -> Option<T> {
        if !(u >= T::zero()) || u > self.total() {
            return None;
        }
        if u == T::zero() {
            return Some(T::zero());
        }
        // First piece whose end value reaches u; its start value is < u so
        // its level is strictly positive.
        let ends = &self.cumulative[1..];
        let j = ends.partition_point(|e| *e < u);
        let start = self.breakpoints[j];
        let t = start + (u - self.cumulative[j]) / self.levels[j];
        Some(t.min(self.piece_end(j)))
    }

    pub fn has_zero_level(&self) -> bool {
        self.levels.iter().any(|l| *l == T::zero())
    }

    pub fn is_strictly_positive(&self) -> bool {
        !self.has_zero_level()
    }

    /// Applies `f` to every level, keeping the breakpoints.
    pub fn map_levels(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(
            self.breakpoints.clone(),
            self.levels.iter().map(|l| f(*l)).collect(),
            self.horizon,
        )
    }

    /// Pointwise product on the merged breakpoint grid.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.horizon != other.horizon {
            return Err(domain(format!(
                "horizon mismatch: {} vs {}",
                self.horizon, other.horizon
            )));
        }
        let mut grid: Vec<T> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .copied()
            .collect();
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        let levels = grid
            .iter()
            .map(|t| self.level_at(*t) * other.level_at(*t))
            .collect();
        Self::new(grid, levels, self.horizon)
    }

    /// Same path in another scalar type.
    pub fn cast<U: Scalar>(&self) -> Result<IntensityPath<U>> {
        let conv = |x: &T| U::lit(x.as_f64());
        IntensityPath::new(
            self.breakpoints.iter().map(conv).collect(),
            self.levels.iter().map(conv).collect(),
            conv(&self.horizon),
        )
    }
}

/// Law of the positive jumps of a compound-Poisson intensity.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpLaw {
    Exponential { mean: f64 },
    Fixed { value: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpLaw::Exponential { mean } => {
                if !(mean.is_finite() && *mean > 0.0) {
                    return Err(config(format!("jump_law exponential mean must be positive, got {mean}")));
                }
            }
            JumpLaw::Fixed { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(config(format!("jump_law fixed value must be positive, got {value}")));
                }
            }
            JumpLaw::Discrete { values, probs } => {
                validate_table("jump_law", values, probs)?;
                if values.iter().any(|v| *v <= 0.0) {
                    return Err(config("jump_law discrete values must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpLaw::Exponential { mean } => mean * standard_exponential(rng),
            JumpLaw::Fixed { value } => *value,
            JumpLaw::Discrete { values, probs } => values[sample_index(probs, rng)],
        }
    }

    /// Finite support as `(value, probability)` pairs, if any.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            JumpLaw::Exponential { .. } => None,
            JumpLaw::Fixed { value } => Some(vec![(*value, 1.0)]),
            JumpLaw::Discrete { values, probs } => {
                let total: f64 = probs.iter().sum();
                Some(values.iter().zip(probs).map(|(v, p)| (*v, p / total)).collect())
            }
        }
    }

    /// Whether `E[exp(alpha * xi)]` is finite.
    pub fn has_finite_mgf(&self, alpha: f64) -> bool {
        match self {
            JumpLaw::Exponential { mean } => alpha < 1.0 / mean,
            _ => alpha.is_finite(),
        }
    }
}

/// Compound-Poisson intensity `X_t = x0 + sum_{k <= M_t} xi_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundPoissonIntensitySpec {
    pub x0: f64,
    pub jump_rate: f64,
    pub jump_law: JumpLaw,
}

impl CompoundPoissonIntensitySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.x0.is_finite() && self.x0 > 0.0) {
            return Err(config(format!("x0 must be positive, got {}", self.x0)));
        }
        if !(self.jump_rate.is_finite() && self.jump_rate > 0.0) {
            return Err(config(format!("jump_rate must be positive, got {}", self.jump_rate)));
        }
        self.jump_law.validate()
    }

    /// Step path through the given jump times with the given jump sizes.
    /// Jump times at or beyond the horizon are ignored.
    pub fn path_from_jumps(&self, jump_times: &[f64], sizes: &[f64], horizon: f64) -> Result<IntensityPath<f64>> {
        let mut breakpoints = vec![0.0];
        let mut levels = vec![self.x0];
        let mut level = self.x0;
        for (&tau, &xi) in jump_times.iter().zip(sizes) {
            if tau >= horizon {
                break;
            }
            level += xi;
            if tau <= *breakpoints.last().unwrap() {
                // coincident jump times collapse into one step
                *levels.last_mut().unwrap() = level;
            } else {
                breakpoints.push(tau);
                levels.push(level);
            }
        }
        IntensityPath::new(breakpoints, levels, horizon)
    }

    /// Jump times of `M` on `[0, horizon)`.
    pub fn sample_jump_times<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Vec<f64> {
        let mut times = Vec::new();
        let mut tau = 0.0;
        loop {
            tau += standard_exponential(rng) / self.jump_rate;
            if tau >= horizon {
                return times;
            }
            times.push(tau);
        }
    }

    pub fn sample_path<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> IntensityPath<f64> {
        let times = self.sample_jump_times(horizon, rng);
        let sizes: Vec<f64> = times.iter().map(|_| self.jump_law.sample(rng)).collect();
        self.path_from_jumps(&times, &sizes, horizon)
            .expect("validated compound-Poisson spec yields a valid path")
    }
}

/// Distribution of a random constant level.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelLaw {
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Uniform { low: f64, high: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl LevelLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            LevelLaw::Discrete { values, probs } => {
                validate_table("level_law", values, probs)?;
                if values.iter().any(|v| *v < 0.0) {
                    return Err(config("level_law discrete values must be nonnegative"));
                }
            }
            LevelLaw::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low >= 0.0 && low < high) {
                    return Err(config(format!("level_law uniform needs 0 <= low < high, got [{low}, {high}]")));
                }
            }
            LevelLaw::Gamma { shape, scale } => {
                if !(shape.is_finite() && scale.is_finite() && *shape > 0.0 && *scale > 0.0) {
                    return Err(config("level_law gamma needs positive shape and scale"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LevelLaw::Discrete { values, probs } => values[sample_index(probs, rng)],
            LevelLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            LevelLaw::Gamma { shape, scale } => Gamma::new(*shape, *scale)
                .expect("validated gamma law")
                .sample(rng),
        }
    }

    fn admits_zero(&self) -> bool {
        match self {
            LevelLaw::Discrete { values, probs } => values.iter().zip(probs).any(|(v, p)| *v == 0.0 && *p > 0.0),
            LevelLaw::Uniform { low, .. } => *low == 0.0,
            LevelLaw::Gamma { .. } => false,
        }
    }
}

/// Prior on the intensity path, i.e. the time-zero information about `X`.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Fixed(IntensityPath<f64>),
    RandomLevel { law: LevelLaw, horizon: f64 },
    CompoundPoisson { spec: CompoundPoissonIntensitySpec, horizon: f64 },
}

impl PriorSpec {
    pub fn horizon(&self) -> f64 {
        match self {
            PriorSpec::Fixed(p) => p.horizon(),
            PriorSpec::RandomLevel { horizon, .. } | PriorSpec::CompoundPoisson { horizon, .. } => *horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let horizon = self.horizon();
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(config(format!("horizon must be positive, got {horizon}")));
        }
        match self {
            PriorSpec::Fixed(_) => Ok(()),
            PriorSpec::RandomLevel { law, .. } => law.validate(),
            PriorSpec::CompoundPoisson { spec, .. } => spec.validate(),
        }
    }

    /// Whether some draw may contain a zero level (so `1/X` is undefined).
    pub fn admits_zero_levels(&self) -> bool {
        match self {
            PriorSpec::Fixed(p) => p.has_zero_level(),
            PriorSpec::RandomLevel { law, .. } => law.admits_zero(),
            PriorSpec::CompoundPoisson { .. } => false,
        }
    }

    /// Draws a path without re-validating; callers validate once up front.
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> IntensityPath<f64> {
        match self {
            PriorSpec::Fixed(p) => p.clone(),
            PriorSpec::RandomLevel { law, horizon } => {
                IntensityPath::constant(law.sample(rng), *horizon).expect("validated level law")
            }
            PriorSpec::CompoundPoisson { spec, horizon } => spec.sample_path(*horizon, rng),
        }
    }
}

/// Draws one intensity path from the prior.
pub fn sample_prior<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> Result<IntensityPath<f64>> {
    prior.validate()?;
    Ok(prior.draw(rng))
}

/// Exponential(1) by inversion.
pub fn standard_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -u.ln()
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if target < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

fn validate_table(name: &str, values: &[f64], probs: &[f64]) -> Result<()> {
    if values.is_empty() || values.len() != probs.len() {
        return Err(config(format!(
            "{name}: {} values but {} probabilities",
            values.len(),
            probs.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(config(format!("{name}: values must be finite")));
    }
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(config(format!("{name}: probabilities must be nonnegative")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(config(format!("{name}: probabilities sum to {total}, expected 1")));
    }
    Ok(())
}
