//! The marginal random-effects model: studies, datasets, inverse-variance
//! weights, pooled estimate and standard error, and the correspondence
//! between the heterogeneity variance `tau^2` and the relative measure
//! I-squared.
//!
//! This layer is pure algebra over `(y_i, s_i)` pairs. A single study is
//! enough for pooling; the heterogeneity machinery upstairs requires two.

use crate::{Error, Result};

/// One study: an effect estimate `y_i` (e.g. a log odds ratio) with its
/// standard error `s_i` on the same scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    label: String,
    estimate: f64,
    stderr: f64,
}

impl Study {
    /// Validates and builds a study: `estimate` finite, `stderr` positive,
    /// finite, and small enough that its square is representable.
    pub fn new(label: impl Into<String>, estimate: f64, stderr: f64) -> Result<Self> {
        if !estimate.is_finite() {
            return Err(Error::domain(format!(
                "study estimate must be finite, got {estimate}"
            )));
        }
        if !stderr.is_finite() || stderr <= 0.0 || !(stderr * stderr).is_finite() {
            return Err(Error::domain(format!(
                "study standard error must be positive and finite (with finite square), got {stderr}"
            )));
        }
        Ok(Study {
            label: label.into(),
            estimate,
            stderr,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    pub fn stderr(&self) -> f64 {
        self.stderr
    }

    /// The within-study variance `s_i^2`.
    pub fn variance(&self) -> f64 {
        self.stderr * self.stderr
    }
}

/// An ordered collection of studies; the unit of every analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    studies: Vec<Study>,
}

impl Dataset {
    /// Builds a dataset from at least one study.
    pub fn new(studies: Vec<Study>) -> Result<Self> {
        if studies.is_empty() {
            return Err(Error::InsufficientData { k: 0, required: 1 });
        }
        Ok(Dataset { studies })
    }

    /// Number of studies `k`.
    pub fn k(&self) -> usize {
        self.studies.len()
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    /// Effect estimates `y_i` in file order.
    pub fn estimates(&self) -> Vec<f64> {
        self.studies.iter().map(Study::estimate).collect()
    }

    /// Within-study variances `s_i^2` in file order.
    pub fn variances(&self) -> Vec<f64> {
        self.studies.iter().map(Study::variance).collect()
    }

    /// Replaces the estimate of study `idx` (used by the simulation layer to
    /// reuse one allocation across replicates).
    pub fn set_estimate(&mut self, idx: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::domain(format!(
                "study estimate must be finite, got {value}"
            )));
        }
        let study = self
            .studies
            .get_mut(idx)
            .ok_or_else(|| Error::contract(format!("study index {idx} out of bounds")))?;
        study.estimate = value;
        Ok(())
    }

    /// Arithmetic mean of the squared standard errors (the "typical"
    /// within-study variance used by the I-squared definition).
    pub(crate) fn mean_variance(&self) -> f64 {
        mean_variance_slice(&self.variances())
    }
}

pub(crate) fn mean_variance_slice(s2: &[f64]) -> f64 {
    s2.iter().sum::<f64>() / s2.len() as f64
}

/// Pooled estimate and weights conditional on one fixed `tau2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSummary {
    /// Weighted average of the study estimates.
    pub mu_hat: f64,
    /// Standard error of `mu_hat`, `(sum of weights)^(-1/2)`.
    pub sigma_mu_hat: f64,
    /// Inverse-variance weights `1/(s_i^2 + tau2)`.
    pub weights: Vec<f64>,
    /// The heterogeneity variance the summary is conditioned on.
    pub tau2: f64,
}

fn check_tau2(tau2: f64) -> Result<()> {
    if !tau2.is_finite() || tau2 < 0.0 {
        return Err(Error::domain(format!(
            "tau2 must be a finite non-negative real, got {tau2}"
        )));
    }
    Ok(())
}

/// Inverse-variance weights `w_i = 1/(s_i^2 + tau2)`.
pub fn weights(d: &Dataset, tau2: f64) -> Result<Vec<f64>> {
    check_tau2(tau2)?;
    Ok(d.studies
        .iter()
        .map(|s| 1.0 / (s.variance() + tau2))
        .collect())
}

/// Weighted average of the study estimates with the given weights.
pub fn pooled_estimate(d: &Dataset, w: &[f64]) -> Result<f64> {
    if w.len() != d.k() {
        return Err(Error::contract(format!(
            "weight vector length {} does not match dataset size {}",
            w.len(),
            d.k()
        )));
    }
    check_weights(w)?;
    let sum_w: f64 = w.iter().sum();
    let sum_wy: f64 = d
        .studies
        .iter()
        .zip(w)
        .map(|(s, wi)| wi * s.estimate())
        .sum();
    Ok(sum_wy / sum_w)
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::contract("weight vector must be non-empty"));
    }
    if let Some(bad) = w.iter().find(|wi| !wi.is_finite() || **wi <= 0.0) {
        return Err(Error::contract(format!(
            "weights must be positive and finite, got {bad}"
        )));
    }
    Ok(())
}

/// Standard error of the pooled estimate: `(sum of weights)^(-1/2)`.
pub fn pooled_se(w: &[f64]) -> Result<f64> {
    check_weights(w)?;
    let sum_w: f64 = w.iter().sum();
    Ok(1.0 / sum_w.sqrt())
}

/// Convenience bundle: weights, pooled estimate, and pooled standard error
/// at one `tau2`.
pub fn pooled_summary(d: &Dataset, tau2: f64) -> Result<PooledSummary> {
    let w = weights(d, tau2)?;
    let mu_hat = pooled_estimate(d, &w)?;
    let sigma_mu_hat = pooled_se(&w)?;
    Ok(PooledSummary {
        mu_hat,
        sigma_mu_hat,
        weights: w,
        tau2,
    })
}

/// Relative heterogeneity `I^2 = tau2 / (tau2 + mean(s_i^2))`, in [0, 1).
pub fn i_squared(tau2: f64, d: &Dataset) -> Result<f64> {
    check_tau2(tau2)?;
    if tau2 == 0.0 {
        return Ok(0.0);
    }
    let s2bar = d.mean_variance();
    Ok(tau2 / (tau2 + s2bar))
}

/// Inverse of [`i_squared`]: the `tau2` with the given relative
/// heterogeneity for this dataset, `tau2 = mean(s_i^2) * i2 / (1 - i2)`.
pub fn tau2_from_i2(i2: f64, d: &Dataset) -> Result<f64> {
    if !i2.is_finite() || !(0.0..1.0).contains(&i2) {
        return Err(Error::domain(format!(
            "i2 must lie in [0, 1), got {i2}"
        )));
    }
    Ok(d.mean_variance() * i2 / (1.0 - i2))
}

/// Pooled mean and weight total in one pass over parallel slices; the
/// hot-path kernel behind `pooled_estimate`/`pooled_se` used by the
/// estimators and the simulation layer. Returns `(mu_hat, sum_w)`.
pub(crate) fn pooled_core(y: &[f64], s2: &[f64], tau2: f64) -> (f64, f64) {
    let mut sum_w = 0.0;
    let mut sum_wy = 0.0;
    for (yi, s2i) in y.iter().zip(s2) {
        let w = 1.0 / (s2i + tau2);
        sum_w += w;
        sum_wy += w * yi;
    }
    (sum_wy / sum_w, sum_w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn dataset(y: &[f64], s: &[f64]) -> Dataset {
        let studies = y
            .iter()
            .zip(s)
            .enumerate()
            .map(|(i, (yi, si))| Study::new(format!("study-{}", i + 1), *yi, *si).unwrap())
            .collect();
        Dataset::new(studies).unwrap()
    }

    #[test]
    fn study_validation() {
        assert!(Study::new("a", 0.0, 1.0).is_ok());
        assert!(Study::new("a", f64::NAN, 1.0).is_err());
        assert!(Study::new("a", f64::INFINITY, 1.0).is_err());
        assert!(Study::new("a", 0.0, 0.0).is_err());
        assert!(Study::new("a", 0.0, -1.0).is_err());
        assert!(Study::new("a", 0.0, 1e200).is_err()); // square overflows
    }

    #[test]
    fn dataset_requires_a_study() {
        assert!(matches!(
            Dataset::new(vec![]),
            Err(crate::Error::InsufficientData { k: 0, required: 1 })
        ));
    }

    #[test]
    fn weights_examples() {
        let d = dataset(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(weights(&d, 0.0).unwrap(), vec![1.0, 1.0]);
        let d = dataset(&[0.0, 0.0], &[1.0, 2.0]);
        assert_eq!(weights(&d, 0.0).unwrap(), vec![1.0, 0.25]);
        let d = dataset(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(weights(&d, 1.0).unwrap(), vec![0.5, 0.5]);
        assert!(weights(&d, -0.1).is_err());
        assert!(weights(&d, f64::NAN).is_err());
    }

    #[test]
    fn pooled_estimate_examples() {
        let d = dataset(&[0.0, 2.0], &[1.0, 1.0]);
        assert_eq!(pooled_estimate(&d, &[1.0, 1.0]).unwrap(), 1.0);
        let d = dataset(&[1.0, 1.0, 1.0], &[1.0, 2.0, 0.5]);
        assert_eq!(pooled_estimate(&d, &[0.3, 5.0, 1.7]).unwrap(), 1.0);
        let d = dataset(&[0.0, 3.0], &[1.0, 1.0]);
        assert_eq!(pooled_estimate(&d, &[2.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn pooled_estimate_contract_errors() {
        let d = dataset(&[0.0, 2.0], &[1.0, 1.0]);
        assert!(matches!(
            pooled_estimate(&d, &[1.0]),
            Err(crate::Error::Contract(_))
        ));
        assert!(pooled_estimate(&d, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn pooled_estimate_stays_within_data_range() {
        let d = dataset(&[-2.0, 0.5, 3.0], &[1.0, 0.3, 2.0]);
        let w = weights(&d, 0.7).unwrap();
        let mu = pooled_estimate(&d, &w).unwrap();
        assert!((-2.0..=3.0).contains(&mu));
    }

    #[test]
    fn pooled_se_examples() {
        assert_abs_diff_eq!(
            pooled_se(&[1.0, 1.0]).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );
        assert_eq!(pooled_se(&[4.0]).unwrap(), 0.5);
        assert_eq!(pooled_se(&[1.0, 1.0, 2.0]).unwrap(), 0.5);
        assert!(pooled_se(&[]).is_err());
        assert!(pooled_se(&[0.0]).is_err());
    }

    #[test]
    fn single_study_pooling_is_permitted() {
        let d = dataset(&[1.5], &[0.5]);
        let s = pooled_summary(&d, 0.0).unwrap();
        assert_eq!(s.mu_hat, 1.5);
        assert_eq!(s.sigma_mu_hat, 0.5);
    }

    #[test]
    fn i_squared_examples() {
        let d = dataset(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(i_squared(0.0, &d).unwrap(), 0.0);
        assert_abs_diff_eq!(i_squared(1.0, &d).unwrap(), 0.5, epsilon = 1e-15);
        let d = dataset(&[0.0, 0.0], &[1.0, 3.0]);
        assert_abs_diff_eq!(i_squared(5.0, &d).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn tau2_from_i2_examples() {
        let d = dataset(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(tau2_from_i2(0.0, &d).unwrap(), 0.0);
        assert_abs_diff_eq!(tau2_from_i2(0.5, &d).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tau2_from_i2(0.9, &d).unwrap(), 9.0, epsilon = 1e-14);
        assert!(tau2_from_i2(1.0, &d).is_err());
        assert!(tau2_from_i2(-0.1, &d).is_err());
    }

    #[test]
    fn i2_and_tau2_are_mutually_inverse() {
        let d = dataset(&[0.1, -0.4, 2.0], &[0.3, 1.7, 0.9]);
        for i in 0..20 {
            let i2 = f64::from(i) / 20.0;
            let tau2 = tau2_from_i2(i2, &d).unwrap();
            assert_abs_diff_eq!(i_squared(tau2, &d).unwrap(), i2, epsilon = 1e-12);
        }
        for &tau2 in &[0.0, 0.3, 1.0, 42.0] {
            let i2 = i_squared(tau2, &d).unwrap();
            assert_abs_diff_eq!(tau2_from_i2(i2, &d).unwrap(), tau2, epsilon = 1e-12 * (1.0 + tau2));
        }
    }

    #[test]
    fn pooled_core_matches_public_route() {
        let d = dataset(&[0.2, -1.0, 0.7, 0.0], &[0.5, 1.0, 2.0, 0.8]);
        for &tau2 in &[0.0, 0.4, 3.0] {
            let w = weights(&d, tau2).unwrap();
            let mu = pooled_estimate(&d, &w).unwrap();
            let se = pooled_se(&w).unwrap();
            let (mu2, sum_w) = pooled_core(&d.estimates(), &d.variances(), tau2);
            assert_abs_diff_eq!(mu, mu2, epsilon = 1e-15);
            assert_abs_diff_eq!(se, 1.0 / sum_w.sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn set_estimate_updates_and_validates() {
        let mut d = dataset(&[0.0, 1.0], &[1.0, 1.0]);
        d.set_estimate(1, 2.5).unwrap();
        assert_eq!(d.estimates(), vec![0.0, 2.5]);
        assert!(d.set_estimate(1, f64::NAN).is_err());
        assert!(d.set_estimate(7, 0.0).is_err());
    }
}
