//! Random-effects meta-analysis toolkit.
//!
//! The crate implements the marginal normal-normal random-effects model
//! `y_i ~ N(mu, s_i^2 + tau^2)`: inverse-variance pooling, three classical
//! estimators of the between-study variance `tau^2` (DerSimonian-Laird,
//! restricted maximum likelihood, Paule-Mandel), the Q-profile confidence
//! interval for `tau^2`, and three confidence intervals for the pooled effect
//! (normal approximation, Hartung-Knapp-Sidik-Jonkman, and the modified
//! Knapp-Hartung variant with the `q* = max(1, q)` floor).
//!
//! A deterministic Monte Carlo laboratory ([`simulation`]) measures coverage
//! probabilities, interval-length ratios, and related diagnostics of these
//! procedures over a configurable scenario grid, with results that are a pure
//! function of the grid specification and a single seed, independent of
//! thread scheduling.
//!
//! Layering, bottom to top:
//!
//! * [`dist`] — probability kernels: quantiles and CDFs for the standard
//!   normal, Student-t, and chi-square distributions.
//! * [`rng`] — seedable, splittable random streams and normal variate
//!   generation by inverse-CDF transform.
//! * [`model`] — studies, datasets, weights, pooled estimate/standard error,
//!   and the I-squared correspondence.
//! * [`heterogeneity`] — DL/REML/PM point estimation and the Q-profile
//!   interval for `tau^2`.
//! * [`inference`] — the q factor, confidence intervals, and the full
//!   analysis bundle.
//! * [`simulation`] — the coverage laboratory.

pub mod dist;
pub mod heterogeneity;
pub mod inference;
pub mod model;
pub mod rng;
pub mod simulation;

mod special;

pub use dist::{
    chi_square_cdf, chi_square_quantile, std_normal_cdf, std_normal_quantile, student_t_cdf,
    student_t_quantile,
};
pub use heterogeneity::{
    dl_estimate, estimate_tau2, generalized_q, pm_estimate, q_profile_ci, reml_estimate,
    Estimator, TauEstimate, TauInterval,
};
pub use inference::{
    analyze, ci_hksj, ci_mkh, ci_normal, q_factor, q_star, AnalysisResult, CiMethod,
    ConfidenceInterval,
};
pub use model::{
    i_squared, pooled_estimate, pooled_se, pooled_summary, tau2_from_i2, weights, Dataset,
    PooledSummary, Study,
};
pub use rng::{absorb, mix64, RngStream};
pub use simulation::{
    mc_stderr, run_grid, scenario_variances, simulate_cell, CellResult, EstimatorStats,
    Scenario, ScenarioSpec, SimCell,
};

/// Errors raised by the statistical layers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation
    /// (probability outside (0,1), negative variance, non-finite input, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally inconsistent arguments (length mismatches, empty
    /// sequences where data is required).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The dataset has too few studies for the requested operation.
    #[error("insufficient data: operation requires at least {required} studies, got {k}")]
    InsufficientData { k: usize, required: usize },

    /// An iterative solver failed to reach its tolerance. Carries the last
    /// iterate so callers can inspect how far the solver got.
    #[error("{context} did not converge within {iterations} iterations (last iterate {last})")]
    NonConvergence {
        context: String,
        last: f64,
        iterations: usize,
    },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

/// Validates that `p` is a probability strictly inside (0, 1).
pub(crate) fn check_probability(p: f64, name: &str) -> Result<()> {
    if p.is_finite() && p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must lie strictly inside (0, 1), got {p}"
        )))
    }
}
