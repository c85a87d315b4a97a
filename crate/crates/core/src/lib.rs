//! Conditional Poisson (Cox) processes with piecewise-constant intensities.
//!
//! * [`intensity`]: intensity paths, their exact cumulative integral and
//!   inverse, and priors (fixed, random level, compound Poisson).
//! * [`densities`]: conditional arrival-time kernels and the intensity
//!   rebuilt from them.
//! * [`simulation`]: point patterns and two exact samplers.
//! * [`watanabe`]: compensated process and Monte Carlo martingale checks.
//! * [`girsanov`]: the intensity-changing stochastic exponential and checks
//!   of its expectation and of the reweighted law.
//! * [`filtering`]: reference-probability filters with exact Bayes oracles.
//!
//! Path-level math is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the concrete instantiations. Monte Carlo checks run in `f64`.

pub mod densities;
pub mod error;
pub mod filtering;
pub mod girsanov;
pub mod intensity;
pub mod mc;
pub mod scalar;
pub mod simulation;
pub mod special;
pub mod stats;
pub mod watanabe;

pub use densities::{chou_meyer_intensity, phi, psi, DensityKernel};
pub use error::{CoxError, Result};
pub use filtering::{
    fn_intensity, grid_oracle, ks_filter, laplace_filter, FilterEstimate, LaplaceConfig, LaplaceMethod,
    LevelFunctional, OracleOptions,
};
pub use girsanov::{stochastic_exponential, WeightedSample, YRule};
pub use intensity::{
    sample_prior, CompoundPoissonIntensitySpec, IntensityPath, JumpLaw, LevelLaw, PriorSpec,
};
pub use mc::{CheckRow, Summary, Verdict};
pub use scalar::Scalar;
pub use simulation::{increment_pmf, sample_cox_sequential, sample_cox_timechange, PointPattern};

pub type IntensityPathF64 = IntensityPath<f64>;
pub type IntensityPathF32 = IntensityPath<f32>;
pub type PointPatternF64 = PointPattern<f64>;
pub type PointPatternF32 = PointPattern<f32>;
pub type DensityKernelF64<'a> = DensityKernel<'a, f64>;
pub type DensityKernelF32<'a> = DensityKernel<'a, f32>;
pub type CompensatedPathF64<'a> = watanabe::CompensatedPath<'a, f64>;
pub type CompensatedPathF32<'a> = watanabe::CompensatedPath<'a, f32>;
