//! Poisson weights in log space.
//!
//! Conventions: `0^0 = 1` and `e^{-inf} * inf^k = 0`.

use crate::scalar::Scalar;

/// `ln(k!)`.
pub fn ln_factorial<T: Scalar>(k: usize) -> T {
    T::lit(statrs::function::factorial::ln_factorial(k as u64))
}

/// `ln( e^{-mean} mean^k / k! )`, `-inf` when the term vanishes.
pub fn ln_poisson_term<T: Scalar>(k: usize, mean: T) -> T {
    if mean.is_infinite() {
        return T::neg_infinity();
    }
    if k == 0 {
        return -mean;
    }
    if mean == T::zero() {
        return T::neg_infinity();
    }
    -mean + T::from_count(k) * mean.ln() - ln_factorial::<T>(k)
}

/// Poisson probability mass `e^{-mean} mean^k / k!`.
pub fn poisson_pmf<T: Scalar>(k: usize, mean: T) -> T {
    ln_poisson_term(k, mean).exp()
}

/// `P[Poisson(mean) <= k] = e^{-mean} sum_{i<=k} mean^i / i!`.
pub fn poisson_cdf<T: Scalar>(k: usize, mean: T) -> T {
    if mean.is_infinite() {
        return T::zero();
    }
    (0..=k).fold(T::zero(), |acc, i| acc + poisson_pmf(i, mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conventions() {
        assert_eq!(poisson_pmf(0, 0.0_f64), 1.0);
        assert_eq!(poisson_pmf(1, 0.0_f64), 0.0);
        assert_eq!(poisson_pmf(3, f64::INFINITY), 0.0);
        assert_eq!(poisson_cdf(5, f64::INFINITY), 0.0);
    }

    #[test]
    fn unit_mean_pmf() {
        approx::assert_relative_eq!(poisson_pmf(1, 1.0_f64), (-1.0_f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn large_order_does_not_overflow() {
        let p: f64 = poisson_pmf(400, 400.0);
        // Stirling: ~ 1/sqrt(2 pi 400)
        approx::assert_relative_eq!(p, 1.0 / (2.0 * std::f64::consts::PI * 400.0).sqrt(), max_relative = 1e-3);
        let c: f64 = poisson_cdf(400, 400.0);
        assert!(c > 0.5 && c < 0.52, "{c}");
    }
}
