//! Confidence intervals for the pooled effect and the full analysis bundle.
//!
//! Three constructions share the center `mu_hat`:
//!
//! * normal approximation: `mu_hat ± sigma_mu_hat * z_(1-alpha/2)`;
//! * HKSJ: `mu_hat ± sqrt(q) * sigma_mu_hat * t_(k-1);(1-alpha/2)`, where
//!   `q` is the generalized Q statistic at the estimated `tau^2` scaled by
//!   `1/(k-1)`;
//! * mKH: HKSJ with `q` replaced by `q* = max(1, q)`, so the adjusted
//!   interval can never collapse below the t-rescaled baseline.

use crate::dist::{std_normal_quantile, student_t_quantile};
use crate::heterogeneity::{estimate_tau2, generalized_q, Estimator};
use crate::model::{pooled_core, Dataset};
use crate::{check_probability, Error, Result};
use std::fmt;

/// Which interval construction produced a [`ConfidenceInterval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CiMethod {
    Normal,
    Hksj,
    Mkh,
}

impl CiMethod {
    /// Upper-case tag used in reports.
    pub fn tag(self) -> &'static str {
        match self {
            CiMethod::Normal => "NORMAL",
            CiMethod::Hksj => "HKSJ",
            CiMethod::Mkh => "MKH",
        }
    }
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A two-sided confidence interval, symmetric about the pooled estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub method: CiMethod,
    pub alpha: f64,
}

impl ConfidenceInterval {
    /// Interval width (`upper - lower`).
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    /// Whether `x` lies inside the closed interval.
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// The full analysis of one dataset with one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    /// Number of studies.
    pub k: usize,
    /// Heterogeneity estimator used.
    pub estimator: Estimator,
    /// Estimated between-study variance.
    pub tau2_hat: f64,
    /// Relative heterogeneity at the estimate.
    pub i2_hat: f64,
    /// Pooled effect estimate.
    pub mu_hat: f64,
    /// Standard error of the pooled effect (weights at `tau2_hat`).
    pub sigma_mu_hat: f64,
    /// Scaled generalized Q at `tau2_hat` (exactly 1 for PM whenever
    /// `tau2_hat > 0`, by the estimator's defining equation).
    pub q: f64,
    /// `max(1, q)`.
    pub q_star: f64,
    pub ci_normal: ConfidenceInterval,
    pub ci_hksj: ConfidenceInterval,
    pub ci_mkh: ConfidenceInterval,
    pub alpha: f64,
}

/// The scaled quadratic form `q = Q(tau2_hat) / (k - 1)`, sharing weights
/// and pooled mean with the point estimate.
pub fn q_factor(d: &Dataset, tau2_hat: f64) -> Result<f64> {
    let q = generalized_q(d, tau2_hat)?;
    Ok(q / (d.k() - 1) as f64)
}

/// The mKH floor: `q* = max(1, q)`.
pub fn q_star(q: f64) -> f64 {
    q.max(1.0)
}

fn check_sigma(sigma_mu_hat: f64) -> Result<()> {
    if !sigma_mu_hat.is_finite() || sigma_mu_hat <= 0.0 {
        return Err(Error::domain(format!(
            "sigma_mu_hat must be positive and finite, got {sigma_mu_hat}"
        )));
    }
    Ok(())
}

fn check_mu(mu_hat: f64) -> Result<()> {
    if !mu_hat.is_finite() {
        return Err(Error::domain(format!(
            "mu_hat must be finite, got {mu_hat}"
        )));
    }
    Ok(())
}

/// Normal-approximation interval `mu_hat ± sigma_mu_hat * z_(1-alpha/2)`.
pub fn ci_normal(mu_hat: f64, sigma_mu_hat: f64, alpha: f64) -> Result<ConfidenceInterval> {
    check_mu(mu_hat)?;
    check_sigma(sigma_mu_hat)?;
    check_probability(alpha, "alpha")?;
    let half = sigma_mu_hat * std_normal_quantile(1.0 - alpha / 2.0)?;
    Ok(ConfidenceInterval {
        lower: mu_hat - half,
        upper: mu_hat + half,
        method: CiMethod::Normal,
        alpha,
    })
}

fn check_q(q: f64) -> Result<()> {
    if !q.is_finite() || q < 0.0 {
        return Err(Error::domain(format!(
            "q must be a finite non-negative real, got {q}"
        )));
    }
    Ok(())
}

fn t_crit(k: usize, alpha: f64) -> Result<f64> {
    let df = u32::try_from(k - 1)
        .map_err(|_| Error::domain("k - 1 exceeds the supported degrees of freedom"))?;
    student_t_quantile(1.0 - alpha / 2.0, df)
}

/// HKSJ interval `mu_hat ± sqrt(q) * sigma_mu_hat * t_(k-1);(1-alpha/2)`.
/// Degenerates to `[mu_hat, mu_hat]` when `q = 0`.
pub fn ci_hksj(
    mu_hat: f64,
    sigma_mu_hat: f64,
    q: f64,
    k: usize,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    if k < 2 {
        return Err(Error::InsufficientData { k, required: 2 });
    }
    check_mu(mu_hat)?;
    check_sigma(sigma_mu_hat)?;
    check_q(q)?;
    check_probability(alpha, "alpha")?;
    let half = q.sqrt() * sigma_mu_hat * t_crit(k, alpha)?;
    Ok(ConfidenceInterval {
        lower: mu_hat - half,
        upper: mu_hat + half,
        method: CiMethod::Hksj,
        alpha,
    })
}

/// mKH interval: HKSJ with `q` replaced by `q* = max(1, q)`.
pub fn ci_mkh(
    mu_hat: f64,
    sigma_mu_hat: f64,
    q: f64,
    k: usize,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    check_q(q)?;
    let ci = ci_hksj(mu_hat, sigma_mu_hat, q_star(q), k, alpha)?;
    Ok(ConfidenceInterval {
        method: CiMethod::Mkh,
        ..ci
    })
}

/// The q factor actually attributed to an estimate: for PM with a positive
/// root, the defining equation `Q(tau2) = k - 1` makes q exactly 1, so the
/// root-finder's last-bit jitter is snapped away; every other case keeps
/// the computed value. Shared by [`analyze`] and the simulation layer so
/// both report identical statistics.
pub(crate) fn effective_q(estimator: Estimator, tau2_hat: f64, raw_q: f64) -> f64 {
    if estimator == Estimator::Pm && tau2_hat > 0.0 {
        1.0
    } else {
        raw_q
    }
}

/// Runs the full pipeline: estimate `tau^2`, pool conditional on it, form
/// q and q*, and build all three intervals.
pub fn analyze(d: &Dataset, estimator: Estimator, alpha: f64) -> Result<AnalysisResult> {
    check_probability(alpha, "alpha")?;
    let tau = estimate_tau2(d, estimator)?;
    let y = d.estimates();
    let s2 = d.variances();
    let (mu_hat, sum_w) = pooled_core(&y, &s2, tau.value);
    let sigma_mu_hat = 1.0 / sum_w.sqrt();
    let i2_hat = crate::model::i_squared(tau.value, d)?;
    let raw_q = q_factor(d, tau.value)?;
    let q = effective_q(estimator, tau.value, raw_q);
    let q_star_val = q_star(q);
    Ok(AnalysisResult {
        k: d.k(),
        estimator,
        tau2_hat: tau.value,
        i2_hat,
        mu_hat,
        sigma_mu_hat,
        q,
        q_star: q_star_val,
        ci_normal: ci_normal(mu_hat, sigma_mu_hat, alpha)?,
        ci_hksj: ci_hksj(mu_hat, sigma_mu_hat, q, d.k(), alpha)?,
        ci_mkh: ci_mkh(mu_hat, sigma_mu_hat, q, d.k(), alpha)?,
        alpha,
    })
}
