//! Monte Carlo coverage laboratory.
//!
//! Four study-size scenarios (A: all equal; B: one small trial; C: half
//! large, half small; D: one large trial — "small" and "large" squared
//! standard errors differ by a factor of ten), a grid over the number of
//! studies `k` and the relative heterogeneity I-squared, and per-cell
//! replicate loops that draw from the marginal model
//! `y_i ~ N(0, s_i^2 + tau^2)` and score the three interval constructions.
//!
//! Reproducibility contract: every result is a pure function of the grid
//! specification and one 64-bit seed. Each (cell, replicate) pair gets its
//! own RNG stream keyed by an absorb chain over the cell's own coordinates
//! (scenario ordinal, k, I-squared bit pattern) and the replicate index, so
//! the execution schedule, worker count, and the composition of the
//! requested grid cannot change any number.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dist::{std_normal_quantile, student_t_quantile};
use crate::heterogeneity::{
    dl_slices, pm_slices, q_slices, reml_slices, Estimator, REML_DEFAULT_MAX_ITER,
    REML_DEFAULT_TOL,
};
use crate::inference::effective_q;
use crate::model::mean_variance_slice;
use crate::model::pooled_core;
use crate::rng::{absorb, RngStream};
use crate::{check_probability, Error, Result};

/// Replicates with `q` below this floor are excluded from the length-ratio
/// average (the ratio `sqrt(q*/q)` would blow up) and counted instead.
const RATIO_Q_FLOOR: f64 = 1e-12;

/// Study-size scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    /// All trials the same size.
    A,
    /// One small trial among equals.
    B,
    /// Half large trials, half small.
    C,
    /// One large trial among equals.
    D,
}

impl Scenario {
    /// All scenarios in canonical order.
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    /// Stable ordinal used in stream derivation (A=0 .. D=3).
    pub fn ordinal(self) -> u64 {
        self as u64
    }

    pub fn letter(self) -> char {
        match self {
            Scenario::A => 'A',
            Scenario::B => 'B',
            Scenario::C => 'C',
            Scenario::D => 'D',
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            "D" => Ok(Scenario::D),
            other => Err(Error::domain(format!(
                "unknown scenario '{other}' (expected A, B, C, or D)"
            ))),
        }
    }
}

/// One grid point's design: scenario and number of studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub k: usize,
}

/// Full specification of one simulation cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimCell {
    pub spec: ScenarioSpec,
    /// True relative heterogeneity in [0, 1); the true `tau^2` follows via
    /// the scenario's mean squared standard error.
    pub i2: f64,
    /// Estimators to score on the shared replicate draws.
    pub estimators: Vec<Estimator>,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Aggregated results for one estimator within one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorStats {
    pub estimator: Estimator,
    /// Coverage of the true effect by each interval construction.
    pub coverage_normal: f64,
    pub coverage_hksj: f64,
    pub coverage_mkh: f64,
    /// Monte Carlo standard errors of the coverage proportions.
    pub mc_se_normal: f64,
    pub mc_se_hksj: f64,
    pub mc_se_mkh: f64,
    /// Arithmetic mean of the mKH/HKSJ length ratio `sqrt(q*/q)` over
    /// replicates with `q >= 1e-12` (NaN if no replicate qualifies).
    pub mean_len_ratio: f64,
    /// Sample standard deviation of the included length ratios (NaN when
    /// fewer than two replicates qualify); `sd / sqrt(n)` is the Monte
    /// Carlo standard error of `mean_len_ratio`.
    pub sd_len_ratio: f64,
    /// Replicates excluded from the ratio average because `q < 1e-12`.
    pub ratio_excluded: usize,
    /// Fraction of replicates with `q < 1` (the intervals the mKH floor
    /// actually modifies).
    pub frac_q_lt_1: f64,
    pub mc_se_frac_q_lt_1: f64,
    /// Mean of the estimated `tau^2` across replicates.
    pub mean_tau2_hat: f64,
    /// Replicates where the estimator failed to converge (excluded from
    /// every average above, never silently dropped).
    pub failures: usize,
}

/// Results of one simulated cell: the cell spec (with the estimator list in
/// canonical order), the true `tau^2`, and per-estimator statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: SimCell,
    pub true_tau2: f64,
    pub stats: Vec<EstimatorStats>,
}

/// Monte Carlo standard error of a proportion: `sqrt(p(1-p)/n)`.
pub fn mc_stderr(p_hat: f64, n: usize) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_hat), "p_hat out of range: {p_hat}");
    debug_assert!(n >= 1, "n must be >= 1");
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// Squared standard errors for a scenario: A all 1; B ones with a final 10
/// (the small trial); C first ceil(k/2) ones (large trials), rest 10; D
/// ones with a final 0.1 (the large trial).
pub fn scenario_variances(spec: &ScenarioSpec) -> Result<Vec<f64>> {
    let k = spec.k;
    if k < 2 {
        return Err(Error::domain(format!(
            "scenario designs require k >= 2, got {k}"
        )));
    }
    Ok(match spec.scenario {
        Scenario::A => vec![1.0; k],
        Scenario::B => {
            let mut v = vec![1.0; k];
            v[k - 1] = 10.0;
            v
        }
        Scenario::C => {
            let large = k.div_ceil(2);
            let mut v = vec![1.0; k];
            for s in v.iter_mut().skip(large) {
                *s = 10.0;
            }
            v
        }
        Scenario::D => {
            let mut v = vec![1.0; k];
            v[k - 1] = 0.1;
            v
        }
    })
}

/// Per-estimator accumulator for one cell's replicate loop.
#[derive(Default)]
struct Accum {
    cov_normal: usize,
    cov_hksj: usize,
    cov_mkh: usize,
    q_lt_1: usize,
    // Welford accumulation of the length ratio: running mean and sum of
    // squared deviations, numerically stable for the heavy-tailed ratios
    // that small k produces.
    ratio_mean: f64,
    ratio_m2: f64,
    ratio_n: usize,
    ratio_excluded: usize,
    tau2_sum: f64,
    ok: usize,
    failures: usize,
}

impl Accum {
    fn push_ratio(&mut self, r: f64) {
        self.ratio_n += 1;
        let delta = r - self.ratio_mean;
        self.ratio_mean += delta / self.ratio_n as f64;
        self.ratio_m2 += delta * (r - self.ratio_mean);
    }
}

impl Accum {
    fn finish(&self, estimator: Estimator) -> EstimatorStats {
        let n = self.ok;
        let prop = |count: usize| {
            if n == 0 {
                f64::NAN
            } else {
                count as f64 / n as f64
            }
        };
        let se = |p: f64| {
            if n == 0 || p.is_nan() {
                f64::NAN
            } else {
                mc_stderr(p, n)
            }
        };
        let coverage_normal = prop(self.cov_normal);
        let coverage_hksj = prop(self.cov_hksj);
        let coverage_mkh = prop(self.cov_mkh);
        let frac_q_lt_1 = prop(self.q_lt_1);
        EstimatorStats {
            estimator,
            coverage_normal,
            coverage_hksj,
            coverage_mkh,
            mc_se_normal: se(coverage_normal),
            mc_se_hksj: se(coverage_hksj),
            mc_se_mkh: se(coverage_mkh),
            mean_len_ratio: if self.ratio_n == 0 {
                f64::NAN
            } else {
                self.ratio_mean
            },
            sd_len_ratio: if self.ratio_n < 2 {
                f64::NAN
            } else {
                (self.ratio_m2 / (self.ratio_n - 1) as f64).sqrt()
            },
            ratio_excluded: self.ratio_excluded,
            frac_q_lt_1,
            mc_se_frac_q_lt_1: se(frac_q_lt_1),
            mean_tau2_hat: if n == 0 {
                f64::NAN
            } else {
                self.tau2_sum / n as f64
            },
            failures: self.failures,
        }
    }
}

/// Runs one cell: `reps` replicates drawn from the marginal model with the
/// cell's true `tau^2`, scored for every requested estimator on the shared
/// draws. Deterministic for a fixed cell specification.
pub fn simulate_cell(cell: &SimCell) -> Result<CellResult> {
    let k = cell.spec.k;
    let s2 = scenario_variances(&cell.spec)?;
    if !cell.i2.is_finite() || !(0.0..1.0).contains(&cell.i2) {
        return Err(Error::domain(format!(
            "i2 must lie in [0, 1), got {}",
            cell.i2
        )));
    }
    check_probability(cell.alpha, "alpha")?;
    if cell.reps == 0 {
        return Err(Error::domain("reps must be at least 1"));
    }
    if cell.estimators.is_empty() {
        return Err(Error::contract("at least one estimator is required"));
    }
    let mut estimators = cell.estimators.clone();
    estimators.sort();
    estimators.dedup();

    let s2bar = mean_variance_slice(&s2);
    let true_tau2 = s2bar * cell.i2 / (1.0 - cell.i2);
    let sd: Vec<f64> = s2.iter().map(|v| (v + true_tau2).sqrt()).collect();
    let km1 = (k - 1) as f64;
    let df = u32::try_from(k - 1)
        .map_err(|_| Error::domain("k - 1 exceeds the supported degrees of freedom"))?;
    let z_crit = std_normal_quantile(1.0 - cell.alpha / 2.0)?;
    let t_crit = student_t_quantile(1.0 - cell.alpha / 2.0, df)?;

    let cell_hash = absorb(
        absorb(absorb(cell.seed, cell.spec.scenario.ordinal()), k as u64),
        cell.i2.to_bits(),
    );

    let mut acc: Vec<Accum> = estimators.iter().map(|_| Accum::default()).collect();
    let mut y = vec![0.0_f64; k];

    for r in 0..cell.reps {
        let mut stream = RngStream::new(cell.seed, absorb(cell_hash, r as u64));
        for (yi, sd_i) in y.iter_mut().zip(&sd) {
            *yi = stream.draw_normal(0.0, *sd_i)?;
        }
        for (est, a) in estimators.iter().zip(acc.iter_mut()) {
            let tau2 = match est {
                Estimator::Dl => dl_slices(&y, &s2),
                Estimator::Reml => {
                    match reml_slices(&y, &s2, REML_DEFAULT_TOL, REML_DEFAULT_MAX_ITER) {
                        Ok((t, _)) => t,
                        Err(_) => {
                            a.failures += 1;
                            continue;
                        }
                    }
                }
                Estimator::Pm => match pm_slices(&y, &s2) {
                    Ok((t, _)) => t,
                    Err(_) => {
                        a.failures += 1;
                        continue;
                    }
                },
            };
            let (mu, sum_w) = pooled_core(&y, &s2, tau2);
            let sigma = 1.0 / sum_w.sqrt();
            let raw_q = q_slices(&y, &s2, tau2) / km1;
            let q = effective_q(*est, tau2, raw_q);
            let abs_mu = mu.abs();
            // True effect is 0; |mu_hat| <= half-width is exactly interval
            // containment for intervals symmetric about mu_hat.
            if abs_mu <= z_crit * sigma {
                a.cov_normal += 1;
            }
            let half_hksj = q.sqrt() * t_crit * sigma;
            if abs_mu <= half_hksj {
                a.cov_hksj += 1;
            }
            if abs_mu <= q.max(1.0).sqrt() * t_crit * sigma {
                a.cov_mkh += 1;
            }
            if q < 1.0 {
                a.q_lt_1 += 1;
            }
            if q >= RATIO_Q_FLOOR {
                a.push_ratio((q.max(1.0) / q).sqrt());
            } else {
                a.ratio_excluded += 1;
            }
            a.tau2_sum += tau2;
            a.ok += 1;
        }
    }

    let stats = estimators
        .iter()
        .zip(&acc)
        .map(|(est, a)| a.finish(*est))
        .collect();
    Ok(CellResult {
        cell: SimCell {
            estimators,
            ..cell.clone()
        },
        true_tau2,
        stats,
    })
}

/// Evaluates the full Cartesian grid. Axes are canonicalized (sorted,
/// deduplicated); the output is ordered lexicographically by
/// (scenario, k, i2), with each cell's statistics in canonical estimator
/// order — independent of the execution schedule and worker count.
/// Replicate-level estimator failures are flagged in the per-cell counts
/// rather than aborting the grid.
pub fn run_grid(
    scenarios: &[Scenario],
    k_range: RangeInclusive<usize>,
    i2_set: &[f64],
    estimators: &[Estimator],
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<Vec<CellResult>> {
    let mut scenarios = scenarios.to_vec();
    scenarios.sort();
    scenarios.dedup();
    if scenarios.is_empty() {
        return Err(Error::contract("at least one scenario is required"));
    }
    let (k_min, k_max) = (*k_range.start(), *k_range.end());
    if k_min < 2 {
        return Err(Error::domain(format!(
            "the number of studies must be at least 2, got {k_min}"
        )));
    }
    if k_min > k_max {
        return Err(Error::contract("empty k range"));
    }
    for &i2 in i2_set {
        if !i2.is_finite() || !(0.0..1.0).contains(&i2) {
            return Err(Error::domain(format!("i2 must lie in [0, 1), got {i2}")));
        }
    }
    let mut i2_set = i2_set.to_vec();
    i2_set.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    i2_set.dedup();
    if i2_set.is_empty() {
        return Err(Error::contract("at least one i2 value is required"));
    }
    let mut estimators = estimators.to_vec();
    estimators.sort();
    estimators.dedup();
    if estimators.is_empty() {
        return Err(Error::contract("at least one estimator is required"));
    }
    check_probability(alpha, "alpha")?;
    if reps == 0 {
        return Err(Error::domain("reps must be at least 1"));
    }

    let mut cells = Vec::new();
    for &scenario in &scenarios {
        for k in k_min..=k_max {
            for &i2 in &i2_set {
                cells.push(SimCell {
                    spec: ScenarioSpec { scenario, k },
                    i2,
                    estimators: estimators.clone(),
                    alpha,
                    reps,
                    seed,
                });
            }
        }
    }
    cells.par_iter().map(simulate_cell).collect()
}
