//! Exact samplers for conditional Poisson processes on a fixed horizon.
//!
//! Two independent constructions of the same law are provided:
//!
//! * [`sample_cox_timechange`] maps the points of a unit-rate Poisson process
//!   through the inverse cumulative intensity;
//! * [`sample_cox_sequential`] draws each arrival from the one-step kernel of
//!   the previous one by inverting its distribution function piece by piece.
//!
//! Their distributional agreement is checked in the tests.

use rand::distr::Open01;
use rand::Rng;

use crate::densities::phi;
use crate::error::{domain, Result};
use crate::intensity::{standard_exponential, IntensityPath};
use crate::scalar::Scalar;
use crate::special::ln_poisson_term;

/// Strictly increasing arrival times in `(0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern<T> {
    arrivals: Vec<T>,
    horizon: T,
}

impl<T: Scalar> PointPattern<T> {
    pub fn new(arrivals: Vec<T>, horizon: T) -> Result<Self> {
        if !(horizon.is_finite() && horizon > T::zero()) {
            return Err(domain(format!("horizon must be positive and finite, got {horizon}")));
        }
        if arrivals.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(domain("arrivals must be strictly increasing"));
        }
        if let Some(a) = arrivals.iter().find(|a| !(**a > T::zero() && **a <= horizon)) {
            return Err(domain(format!("arrival {a} outside (0, {horizon}]")));
        }
        Ok(Self { arrivals, horizon })
    }

    pub fn empty(horizon: T) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    pub fn arrivals(&self) -> &[T] {
        &self.arrivals
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    /// `N_t = #{n : T_n <= t}`.
    pub fn count(&self, t: T) -> usize {
        self.arrivals.partition_point(|a| *a <= t)
    }

    /// `N_{t-} = #{n : T_n < t}`.
    pub fn count_before(&self, t: T) -> usize {
        self.arrivals.partition_point(|a| *a < t)
    }

    /// `T_n` for `n >= 1`, `T_0 = 0`; `None` past the last arrival.
    pub fn arrival(&self, n: usize) -> Option<T> {
        if n == 0 {
            Some(T::zero())
        } else {
            self.arrivals.get(n - 1).copied()
        }
    }

    /// Arrivals up to and including `t`, same horizon.
    pub fn truncated(&self, t: T) -> Self {
        Self {
            arrivals: self.arrivals[..self.count(t)].to_vec(),
            horizon: self.horizon,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Result<PointPattern<U>> {
        PointPattern::new(
            self.arrivals.iter().map(|a| U::lit(a.as_f64())).collect(),
            U::lit(self.horizon.as_f64()),
        )
    }

    /// Appends an arrival, dropping it when roundoff would break strict
    /// monotonicity.
    fn push_arrival(&mut self, t: T) {
        if self.arrivals.last().map_or(t > T::zero(), |last| t > *last) && t <= self.horizon {
            self.arrivals.push(t);
        }
    }
}

/// Maps unit-rate Poisson points `u_1 < u_2 < ...` through the inverse
/// cumulative intensity; points beyond `Lambda(horizon)` are dropped.
pub fn map_unit_arrivals<T: Scalar>(path: &IntensityPath<T>, units: &[T]) -> Result<PointPattern<T>> {
    if units.windows(2).any(|w| !(w[0] < w[1])) || units.first().is_some_and(|u| !(*u > T::zero())) {
        return Err(domain("unit-rate points must be positive and strictly increasing"));
    }
    let mut pattern = PointPattern::empty(path.horizon())?;
    for u in units {
        match path.inverse_cumulative(*u) {
            Some(t) => pattern.push_arrival(t),
            None => break,
        }
    }
    Ok(pattern)
}

/// Time-change sampler.
pub fn sample_cox_timechange<T: Scalar, R: Rng + ?Sized>(path: &IntensityPath<T>, rng: &mut R) -> PointPattern<T> {
    continue_timechange(path, PointPattern::empty(path.horizon()).expect("path horizon is valid"), T::zero(), rng)
}

/// Extends `prefix` (whose arrivals all lie at or before `from`) with the
/// arrivals of the process on `(from, horizon]`. Given the path, the future
/// of a Cox process after any time is again a Cox process with the same
/// intensity, whatever happened before.
pub fn continue_timechange<T: Scalar, R: Rng + ?Sized>(
    path: &IntensityPath<T>,
    prefix: PointPattern<T>,
    from: T,
    rng: &mut R,
) -> PointPattern<T> {
    debug_assert!(prefix.arrivals().last().is_none_or(|a| *a <= from));
    let total = path.total();
    let mut pattern = prefix;
    let mut u = path.cumulative_extended(from);
    loop {
        u = u + T::lit(standard_exponential(rng));
        if u > total {
            return pattern;
        }
        if let Some(t) = path.inverse_cumulative(u) {
            pattern.push_arrival(t);
        }
    }
}

/// Sequential sampler: `T_{n+1}` is drawn from `phi(path, T_n)` by inverse
/// CDF; stops once a draw falls past the horizon or into the atom at infinity.
pub fn sample_cox_sequential<T: Scalar, R: Rng + ?Sized>(path: &IntensityPath<T>, rng: &mut R) -> PointPattern<T> {
    let mut pattern = PointPattern::empty(path.horizon()).expect("path horizon is valid");
    let mut last = T::zero();
    loop {
        let kernel = phi(path, last).expect("arrivals stay within the horizon");
        let u: f64 = rng.sample(Open01);
        match kernel.quantile(T::lit(u)) {
            Some(t) if t > last => {
                pattern.push_arrival(t);
                last = t;
            }
            Some(_) => continue,
            None => return pattern,
        }
    }
}

/// `P[N_t - N_r = n | path]`: Poisson pmf with mean `Lambda(t) - Lambda(r)`.
pub fn increment_pmf<T: Scalar>(path: &IntensityPath<T>, r: T, t: T, n: usize) -> Result<T> {
    if !(r >= T::zero() && r <= t && t <= path.horizon()) {
        return Err(domain(format!("need 0 <= r <= t <= {}, got r = {r}, t = {t}", path.horizon())));
    }
    let mean = path.cumulative(t)? - path.cumulative(r)?;
    Ok(ln_poisson_term(n, mean).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::replicate_rng;
    use crate::special::poisson_cdf;
    use approx::assert_relative_eq;

    #[test]
    fn pattern_validation_and_counts() {
        assert!(PointPattern::new(vec![0.5, 0.5], 1.0).is_err());
        assert!(PointPattern::new(vec![0.0], 1.0).is_err());
        assert!(PointPattern::new(vec![1.5], 1.0).is_err());
        let p = PointPattern::new(vec![0.2, 0.5, 1.0], 1.0).unwrap();
        assert_eq!(p.count(0.5), 2);
        assert_eq!(p.count_before(0.5), 1);
        assert_eq!(p.count(1.0), 3);
        assert_eq!(p.arrival(0), Some(0.0));
        assert_eq!(p.arrival(3), Some(1.0));
        assert_eq!(p.arrival(4), None);
        assert_eq!(p.truncated(0.6).arrivals(), &[0.2, 0.5]);
    }

    #[test]
    fn zero_intensity_gives_empty_patterns() {
        let path = IntensityPath::zero(5.0).unwrap();
        for k in 0..20 {
            assert!(sample_cox_timechange(&path, &mut replicate_rng(1, k)).is_empty());
            assert!(sample_cox_sequential(&path, &mut replicate_rng(1, k)).is_empty());
        }
    }

    #[test]
    fn hand_inverted_arrivals() {
        let path = IntensityPath::constant(2.0, 3.0).unwrap();
        let p = map_unit_arrivals(&path, &[1.0, 2.5]).unwrap();
        assert_eq!(p.arrivals(), &[0.5, 1.25]);
        let p = map_unit_arrivals(&path, &[1.0, 7.0]).unwrap();
        assert_eq!(p.arrivals(), &[0.5]);
    }

    #[test]
    fn pmf_examples() {
        let path = IntensityPath::new(vec![0.0, 1.0], vec![0.0, 1.0], 2.0).unwrap();
        assert_eq!(increment_pmf(&path, 0.2, 0.8, 0).unwrap(), 1.0);
        assert_eq!(increment_pmf(&path, 0.2, 0.8, 1).unwrap(), 0.0);
        assert_relative_eq!(increment_pmf(&path, 0.5, 2.0, 1).unwrap(), 0.36787944117144233, max_relative = 1e-15);
        assert!(increment_pmf(&path, 1.0, 0.5, 0).is_err());
        assert!(increment_pmf(&path, 0.0, 2.5, 0).is_err());
    }

    #[test]
    fn pmf_tail_is_bounded() {
        // Remainder beyond N* is at most pmf(N*+1) / (1 - mean/(N*+2)).
        let path = IntensityPath::new(vec![0.0, 1.0], vec![3.0, 5.0], 2.0).unwrap();
        let mean = 8.0;
        for cut in [10usize, 15, 25, 40] {
            let head: f64 = (0..=cut).map(|n| increment_pmf(&path, 0.0, 2.0, n).unwrap()).sum();
            let next = increment_pmf(&path, 0.0, 2.0, cut + 1).unwrap();
            let bound = next / (1.0 - mean / (cut as f64 + 2.0));
            // each log-space pmf is off by a few ulps, so `head` carries ~1e-15 of roundoff
            assert!(1.0 - head <= bound + 32.0 * f64::EPSILON, "cut {cut}: {} > {bound}", 1.0 - head);
            assert_relative_eq!(head, poisson_cdf(cut, mean), epsilon = 1e-14);
        }
    }

    #[test]
    fn samplers_are_simple_and_deterministic() {
        let path = IntensityPath::new(vec![0.0, 1.0, 2.0], vec![5.0, 0.0, 20.0], 3.0).unwrap();
        for k in 0..200 {
            let a = sample_cox_timechange(&path, &mut replicate_rng(3, k));
            let b = sample_cox_timechange(&path, &mut replicate_rng(3, k));
            assert_eq!(a, b);
            assert!(a.arrivals().windows(2).all(|w| w[0] < w[1]));
            // no arrivals on the zero plateau (1, 2)
            assert!(a.arrivals().iter().all(|t| !(*t > 1.0 && *t < 2.0)));
            let s = sample_cox_sequential(&path, &mut replicate_rng(4, k));
            assert!(s.arrivals().windows(2).all(|w| w[0] < w[1]));
            assert!(s.arrivals().iter().all(|t| !(*t > 1.0 && *t < 2.0)));
        }
    }

    #[test]
    fn continuation_keeps_prefix() {
        let path = IntensityPath::constant(4.0, 2.0).unwrap();
        let prefix = PointPattern::new(vec![0.1, 0.3], 2.0).unwrap();
        let p = continue_timechange(&path, prefix, 0.5, &mut replicate_rng(0, 0));
        assert_eq!(&p.arrivals()[..2], &[0.1, 0.3]);
        assert!(p.arrivals()[2..].iter().all(|t| *t > 0.5));
    }

    #[test]
    fn f32_sampler() {
        let path = IntensityPath::constant(3.0_f32, 2.0).unwrap();
        let p = sample_cox_timechange(&path, &mut replicate_rng(0, 1));
        assert!(p.arrivals().windows(2).all(|w| w[0] < w[1]));
    }
}
