//! Conditional arrival-time kernels of a Cox process.
//!
//! Given the intensity path and the count `N_r` at time `r`, the next-but-`k`
//! arrival `T_{n+1}` (with `k = n - N_r`) has density
//!
//! ```text
//! psi(t) = X_t e^{-L(t)} L(t)^k / k!,   L(t) = int_r^t X_s ds,
//! ```
//!
//! on `(r, inf)` plus an atom `e^{-L(inf)} sum_{i<=k} L(inf)^i / i!` at
//! infinity. On every constant piece the density is polynomial times
//! exponential in `L`, so integrals are differences of Poisson CDFs and no
//! quadrature is needed. The one-step kernel `phi` from an arrival `T_n` is
//! the case `k = 0`.

use crate::error::{domain, CoxError, Result};
use crate::intensity::IntensityPath;
use crate::scalar::Scalar;
use crate::simulation::PointPattern;
use crate::special::{ln_poisson_term, poisson_cdf};

/// Density of `T_{n+1}` given the information at time `origin`.
#[derive(Debug, Clone, Copy)]
pub struct DensityKernel<'a, T> {
    path: &'a IntensityPath<T>,
    origin: T,
    jump_index: usize,
    observed_count: usize,
}

impl<'a, T: Scalar> DensityKernel<'a, T> {
    pub fn origin(&self) -> T {
        self.origin
    }

    pub fn jump_index(&self) -> usize {
        self.jump_index
    }

    pub fn observed_count(&self) -> usize {
        self.observed_count
    }

    /// `n - N_r`, or `None` when `N_r > n` (the arrival already happened and
    /// the kernel vanishes).
    pub fn order(&self) -> Option<usize> {
        self.jump_index.checked_sub(self.observed_count)
    }

    fn elapsed(&self, t: T) -> T {
        self.path.integral(self.origin, t)
    }

    /// Density at `t`; zero before the origin. Times past the horizon use
    /// the extended last level.
    pub fn eval(&self, t: T) -> T {
        let Some(k) = self.order() else {
            return T::zero();
        };
        if t < self.origin {
            return T::zero();
        }
        let x = self.path.level_at(t);
        if x == T::zero() {
            return T::zero();
        }
        (x.ln() + ln_poisson_term(k, self.elapsed(t))).exp()
    }

    /// Probability that the arrival never happens.
    pub fn atom(&self) -> T {
        match self.order() {
            Some(k) => poisson_cdf(k, self.path.tail_integral(self.origin)),
            None => T::zero(),
        }
    }

    /// `P[T_{n+1} > t | F_r]` for `t >= r`.
    pub fn survival(&self, t: T) -> T {
        match self.order() {
            Some(k) => poisson_cdf(k, self.elapsed(t.max(self.origin))),
            None => T::zero(),
        }
    }

    /// `int_a^b eval(t) dt` by exact piecewise integration; `b` may be `+inf`.
    pub fn integral(&self, a: T, b: T) -> T {
        let Some(k) = self.order() else {
            return T::zero();
        };
        let lo = a.max(self.origin);
        if !(b > lo) {
            return T::zero();
        }
        let bps = self.path.breakpoints();
        let levels = self.path.levels();
        let mut total = T::zero();
        for j in 0..levels.len() {
            let start = bps[j];
            let end = bps.get(j + 1).copied().unwrap_or(T::infinity());
            let s = start.max(lo);
            let e = end.min(b);
            let x = levels[j];
            if !(e > s) || x == T::zero() {
                continue;
            }
            let l_start = self.elapsed(s);
            let dl = if e.is_infinite() { T::infinity() } else { x * (e - s) };
            total = total + poisson_cdf_drop(k, l_start, dl);
        }
        total
    }

    /// `int_r^inf eval + atom`; equals one whenever `N_r <= n`.
    pub fn total_mass(&self) -> T {
        self.integral(self.origin, T::infinity()) + self.atom()
    }

    /// Smallest `t` with `int_r^t eval >= p`, or `None` when that point lies
    /// past the horizon (including the atom at infinity).
    pub fn quantile(&self, p: T) -> Option<T> {
        let k = self.order()?;
        if !(p >= T::zero() && p < T::one()) {
            return None;
        }
        let horizon = self.path.horizon();
        let target = if k == 0 {
            -(-p).ln_1p()
        } else {
            let available = self.elapsed(horizon);
            let survive = T::one() - p;
            if poisson_cdf(k, available) > survive {
                return None;
            }
            bisect_poisson_cdf(k, survive, available)
        };
        self.walk_to(target)
    }

    /// Walks the pieces forward from the origin until `L(t)` reaches `target`.
    fn walk_to(&self, target: T) -> Option<T> {
        let mut acc = T::zero();
        for (start, end, x) in self.path.pieces() {
            if end <= self.origin {
                continue;
            }
            let s = start.max(self.origin);
            let next = acc + x * (end - s);
            if next >= target && x > T::zero() {
                return Some((s + (target - acc) / x).min(end));
            }
            acc = next;
        }
        None
    }
}

/// `S_k(l) - S_k(l + dl)` with `S_k(l) = P[Poisson(l) <= k]`.
fn poisson_cdf_drop<T: Scalar>(k: usize, l: T, dl: T) -> T {
    if k == 0 {
        let head = (-l).exp();
        if dl.is_infinite() {
            head
        } else {
            -head * (-dl).exp_m1()
        }
    } else if dl.is_infinite() {
        poisson_cdf(k, l)
    } else {
        poisson_cdf(k, l) - poisson_cdf(k, l + dl)
    }
}

/// Solves `S_k(l) = survive` for `l` in `[0, upper]` (decreasing in `l`).
fn bisect_poisson_cdf<T: Scalar>(k: usize, survive: T, upper: T) -> T {
    let (mut lo, mut hi) = (T::zero(), upper);
    for _ in 0..200 {
        let mid = (lo + hi) / (T::one() + T::one());
        if mid <= lo || mid >= hi {
            break;
        }
        if poisson_cdf(k, mid) > survive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Kernel of `T_{n+1}` given `F_r` with `N_r = observed_count`.
pub fn psi<T: Scalar>(
    path: &IntensityPath<T>,
    n: usize,
    r: T,
    observed_count: usize,
) -> Result<DensityKernel<'_, T>> {
    if !(r >= T::zero() && r <= path.horizon()) {
        return Err(domain(format!("origin {r} outside [0, {}]", path.horizon())));
    }
    Ok(DensityKernel {
        path,
        origin: r,
        jump_index: n,
        observed_count,
    })
}

/// Kernel of `T_{n+1}` given `F_{T_n}`: `X_s e^{-int_{T_n}^s X}` plus the
/// atom `e^{-int_{T_n}^inf X}`.
pub fn phi<T: Scalar>(path: &IntensityPath<T>, last_arrival: T) -> Result<DensityKernel<'_, T>> {
    psi(path, 0, last_arrival, 0)
}

/// Intensity rebuilt from the one-step kernels:
/// `lambda_t = phi_t / (1 - int_{T_n}^t phi)` on `T_n <= t < T_{n+1}`.
///
/// The denominator is evaluated as the remaining mass `int_t^inf phi + atom`
/// and cross-checked against `1 - int_{T_n}^t phi`; the result equals
/// `X_t` up to roundoff.
pub fn chou_meyer_intensity<T: Scalar>(
    path: &IntensityPath<T>,
    pattern: &PointPattern<T>,
    t: T,
) -> Result<T> {
    if !(t >= T::zero() && t <= path.horizon()) {
        return Err(domain(format!("time {t} outside [0, {}]", path.horizon())));
    }
    let n = pattern.count(t);
    let last = pattern.arrival(n).unwrap_or(T::zero());
    let kernel = phi(path, last)?;
    let numerator = kernel.eval(t);
    let remaining = kernel.integral(t, T::infinity()) + kernel.atom();
    let direct = T::one() - kernel.integral(last, t);
    if !(remaining > T::zero()) || !(direct > T::zero()) {
        return Err(CoxError::Consistency(format!(
            "non-positive survival at t = {t} (remaining {remaining}, direct {direct})"
        )));
    }
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(64.0));
    if (remaining - direct).abs() > tol {
        return Err(CoxError::Consistency(format!(
            "kernel mass mismatch at t = {t}: {remaining} vs {direct}"
        )));
    }
    Ok(numerator / remaining)
}
