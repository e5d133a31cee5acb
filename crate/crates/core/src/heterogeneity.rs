//! Point estimation of the between-study variance `tau^2` — by the
//! DerSimonian-Laird moment estimator, restricted maximum likelihood, and
//! the Paule-Mandel generalized-Q matching estimator — plus the Q-profile
//! confidence interval for `tau^2`.
//!
//! All estimators truncate at the boundary `tau^2 = 0` explicitly, and all
//! root-finding is bracketed bisection on monotone objectives
//! (unconditionally convergent); REML maximizes its objective directly by
//! bracket growth plus golden-section refinement.

use std::fmt;
use std::str::FromStr;

use crate::dist::chi_square_quantile;
use crate::model::{pooled_core, Dataset};
use crate::{Error, Result};

/// Default argument-scale tolerance for [`reml_estimate`].
pub const REML_DEFAULT_TOL: f64 = 1e-10;
/// Default iteration budget (bracket growth + golden-section steps) for
/// [`reml_estimate`].
pub const REML_DEFAULT_MAX_ITER: usize = 200;

/// The heterogeneity estimator to use. The declaration order (DL, REML, PM)
/// is the canonical ordering used in simulation output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Estimator {
    /// DerSimonian-Laird moment estimator.
    Dl,
    /// Restricted maximum likelihood.
    Reml,
    /// Paule-Mandel (generalized-Q matching).
    Pm,
}

impl Estimator {
    /// All estimators in canonical order.
    pub const ALL: [Estimator; 3] = [Estimator::Dl, Estimator::Reml, Estimator::Pm];

    /// Upper-case tag used in reports and CSV output.
    pub fn tag(self) -> &'static str {
        match self {
            Estimator::Dl => "DL",
            Estimator::Reml => "REML",
            Estimator::Pm => "PM",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dl" => Ok(Estimator::Dl),
            "reml" => Ok(Estimator::Reml),
            "pm" => Ok(Estimator::Pm),
            other => Err(Error::domain(format!(
                "unknown estimator '{other}' (expected one of: dl, reml, pm)"
            ))),
        }
    }
}

/// A point estimate of `tau^2` with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauEstimate {
    /// The estimate, always >= 0 (boundary truncation is explicit).
    pub value: f64,
    /// Which estimator produced it.
    pub estimator: Estimator,
    /// True whenever a value is returned (failures raise errors instead).
    pub converged: bool,
    /// Iterations spent (0 for the closed-form DL).
    pub iterations: usize,
}

/// Confidence interval for `tau^2` (Q-profile construction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
}

fn require_k2(k: usize) -> Result<()> {
    if k < 2 {
        Err(Error::InsufficientData { k, required: 2 })
    } else {
        Ok(())
    }
}

/// Generalized Q statistic: `sum of w_i(tau2) * (y_i - mu_hat(tau2))^2`
/// with weights and pooled mean both evaluated at `tau2`. Non-negative and
/// non-increasing in `tau2`.
pub fn generalized_q(d: &Dataset, tau2: f64) -> Result<f64> {
    require_k2(d.k())?;
    if !tau2.is_finite() || tau2 < 0.0 {
        return Err(Error::domain(format!(
            "tau2 must be a finite non-negative real, got {tau2}"
        )));
    }
    Ok(q_slices(&d.estimates(), &d.variances(), tau2))
}

/// Slice kernel behind [`generalized_q`]: two passes, no allocation.
pub(crate) fn q_slices(y: &[f64], s2: &[f64], tau2: f64) -> f64 {
    let (mu, _) = pooled_core(y, s2, tau2);
    let mut q = 0.0;
    for (yi, s2i) in y.iter().zip(s2) {
        let w = 1.0 / (s2i + tau2);
        let r = yi - mu;
        q += w * r * r;
    }
    q
}

/// DerSimonian-Laird moment estimator (closed form, truncated at 0).
pub fn dl_estimate(d: &Dataset) -> Result<TauEstimate> {
    require_k2(d.k())?;
    Ok(TauEstimate {
        value: dl_slices(&d.estimates(), &d.variances()),
        estimator: Estimator::Dl,
        converged: true,
        iterations: 0,
    })
}

/// Slice kernel behind [`dl_estimate`]: with fixed-effect weights
/// `a_i = 1/s_i^2`, `tau2 = max(0, (Q_FE - (k-1)) / (sum a - sum a^2 / sum a))`.
pub(crate) fn dl_slices(y: &[f64], s2: &[f64]) -> f64 {
    let k = y.len();
    let mut sum_a = 0.0;
    let mut sum_ay = 0.0;
    let mut sum_a2 = 0.0;
    for (yi, s2i) in y.iter().zip(s2) {
        let a = 1.0 / s2i;
        sum_a += a;
        sum_ay += a * yi;
        sum_a2 += a * a;
    }
    let mu = sum_ay / sum_a;
    let mut q_fe = 0.0;
    for (yi, s2i) in y.iter().zip(s2) {
        let r = yi - mu;
        q_fe += r * r / s2i;
    }
    let denom = sum_a - sum_a2 / sum_a;
    ((q_fe - (k - 1) as f64) / denom).max(0.0)
}

/// Restricted log-likelihood of `tau2` (up to an additive constant):
/// `-1/2 [ sum log(s_i^2 + tau2) + log(sum w_i) + sum w_i (y_i - mu_hat)^2 ]`.
pub(crate) fn reml_ll(y: &[f64], s2: &[f64], tau2: f64) -> f64 {
    let mut sum_w = 0.0;
    let mut sum_wy = 0.0;
    let mut sum_log = 0.0;
    for (yi, s2i) in y.iter().zip(s2) {
        let v = s2i + tau2;
        let w = 1.0 / v;
        sum_w += w;
        sum_wy += w * yi;
        sum_log += v.ln();
    }
    let mu = sum_wy / sum_w;
    let mut quad = 0.0;
    for (yi, s2i) in y.iter().zip(s2) {
        let r = yi - mu;
        quad += r * r / (s2i + tau2);
    }
    -0.5 * (sum_log + sum_w.ln() + quad)
}

/// Derivative of the restricted log-likelihood with respect to `tau2`:
/// `-1/2 [ sum w_i - (sum w_i^2)/(sum w_i) - sum w_i^2 (y_i - mu_hat)^2 ]`.
/// The weighted-mean residuals satisfy `sum w_i (y_i - mu_hat) = 0`, so the
/// dependence of `mu_hat` on `tau2` contributes nothing (envelope identity).
/// Unlike the likelihood itself this is free of logarithms and crosses zero
/// linearly at the maximizer, so its sign stays reliable at argument scales
/// where likelihood-value comparisons have already dissolved into rounding
/// noise.
fn reml_score(y: &[f64], s2: &[f64], tau2: f64) -> f64 {
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut sum_wy = 0.0;
    for (yi, s2i) in y.iter().zip(s2) {
        let w = 1.0 / (s2i + tau2);
        sum_w += w;
        sum_w2 += w * w;
        sum_wy += w * yi;
    }
    let mu = sum_wy / sum_w;
    let mut sum_w2r2 = 0.0;
    for (yi, s2i) in y.iter().zip(s2) {
        let w = 1.0 / (s2i + tau2);
        let r = yi - mu;
        sum_w2r2 += w * w * r * r;
    }
    -0.5 * (sum_w - sum_w2 / sum_w - sum_w2r2)
}

/// Restricted maximum likelihood estimate of `tau^2`.
///
/// The objective is maximized directly: the bracket `[0, B]` is grown
/// geometrically from `max(s_i^2)` until the objective decreases, then
/// refined by golden-section search, finishing with bisection on the sign
/// of the derivative once the bracket is tight (value comparisons near a
/// smooth maximum bottom out at roughly the square root of machine
/// precision; the derivative's zero crossing does not). The bracket is
/// narrowed to argument width `tol`. `max_iter` bounds the total number of
/// bracket-growth, golden-section, and bisection steps; exhausting it
/// raises a convergence error carrying the last iterate.
pub fn reml_estimate(d: &Dataset, tol: f64, max_iter: usize) -> Result<TauEstimate> {
    require_k2(d.k())?;
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::domain(format!("tol must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::domain("max_iter must be at least 1"));
    }
    let (value, iterations) = reml_slices(&d.estimates(), &d.variances(), tol, max_iter)?;
    Ok(TauEstimate {
        value,
        estimator: Estimator::Reml,
        converged: true,
        iterations,
    })
}

/// Slice kernel behind [`reml_estimate`]; returns `(tau2, iterations)`.
pub(crate) fn reml_slices(
    y: &[f64],
    s2: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    let ll = |t: f64| reml_ll(y, s2, t);
    let b0 = s2.iter().cloned().fold(f64::MIN, f64::max);

    // Bracket growth: advance 0, b0, 2*b0, ... until the objective drops.
    let mut iters = 0usize;
    let mut lo = 0.0_f64;
    let mut prev_t = 0.0_f64;
    let mut prev_f = ll(0.0);
    let mut cur_t = b0;
    let mut cur_f = ll(b0);
    while cur_f >= prev_f {
        iters += 1;
        if iters >= max_iter || cur_t > 1e300 {
            return Err(Error::NonConvergence {
                context: "REML bracket growth".into(),
                last: cur_t,
                iterations: iters,
            });
        }
        lo = prev_t;
        prev_t = cur_t;
        prev_f = cur_f;
        cur_t *= 2.0;
        cur_f = ll(cur_t);
    }
    let hi = cur_t; // maximum lies in [lo, hi]

    // Golden-section refinement (maximization), stopped while the bracket
    // is still wide enough for likelihood-value comparisons to be exact.
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    const INVPHI2: f64 = 0.381_966_011_250_105_2;
    let coarse = (1e-4 * (1.0 + hi)).max(tol);
    let mut a = lo;
    let mut b = hi;
    let mut h = b - a;
    let mut c = a + INVPHI2 * h;
    let mut d_pt = a + INVPHI * h;
    let mut fc = ll(c);
    let mut fd = ll(d_pt);
    while h > coarse {
        iters += 1;
        if iters >= max_iter {
            return Err(Error::NonConvergence {
                context: "REML golden-section refinement".into(),
                last: 0.5 * (a + b),
                iterations: iters,
            });
        }
        if fc >= fd {
            b = d_pt;
            d_pt = c;
            fd = fc;
            h = b - a;
            c = a + INVPHI2 * h;
            fc = ll(c);
        } else {
            a = c;
            c = d_pt;
            fc = fd;
            h = b - a;
            d_pt = a + INVPHI * h;
            fd = ll(d_pt);
        }
    }

    // Finish on the derivative: inside the coarse bracket the score crosses
    // zero downward at the maximizer. A non-positive left slope means the
    // maximum sits at (or left of) the bracket edge, and symmetrically for
    // the right edge.
    let score = |t: f64| reml_score(y, s2, t);
    let width_floor = tol.max(4.0 * f64::EPSILON * (1.0 + b));
    let mut tau = if score(a) <= 0.0 {
        a
    } else if score(b) >= 0.0 {
        b
    } else {
        while b - a > width_floor {
            iters += 1;
            if iters >= max_iter {
                return Err(Error::NonConvergence {
                    context: "REML derivative bisection".into(),
                    last: 0.5 * (a + b),
                    iterations: iters,
                });
            }
            let m = 0.5 * (a + b);
            if score(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    // Snap to the boundary when the maximizer is within tolerance of 0 and
    // the boundary value is at least as good: 0 is then a valid answer at
    // the advertised argument accuracy, and boundary cases report exactly 0.
    if tau <= tol && ll(0.0) >= ll(tau) {
        tau = 0.0;
    }
    Ok((tau, iters))
}

/// Paule-Mandel estimate: `tau^2 = 0` when `Q(0) <= k-1`, otherwise the
/// unique root of `Q(tau2) = k-1` (bracketed bisection on the monotone
/// decreasing objective, bracket doubled from 1, located well inside 1e-10
/// absolute tolerance).
pub fn pm_estimate(d: &Dataset) -> Result<TauEstimate> {
    require_k2(d.k())?;
    let (value, iterations) = pm_slices(&d.estimates(), &d.variances())?;
    Ok(TauEstimate {
        value,
        estimator: Estimator::Pm,
        converged: true,
        iterations,
    })
}

/// Slice kernel behind [`pm_estimate`]; returns `(tau2, iterations)`.
pub(crate) fn pm_slices(y: &[f64], s2: &[f64]) -> Result<(f64, usize)> {
    let km1 = (y.len() - 1) as f64;
    if q_slices(y, s2, 0.0) <= km1 {
        return Ok((0.0, 0));
    }
    let (root, iters) = q_root(y, s2, km1)?;
    Ok((root, iters))
}

/// Solves `Q(tau2) = target` for a monotone-decreasing `Q` with
/// `Q(0) > target`: doubles the upper bracket from 1 until the sign
/// condition holds, then bisects the bracket down to ~1e-12 width.
/// Returns `(root, iterations)`.
fn q_root(y: &[f64], s2: &[f64], target: f64) -> Result<(f64, usize)> {
    let mut iters = 0usize;
    let mut hi = 1.0_f64;
    while q_slices(y, s2, hi) >= target {
        hi *= 2.0;
        iters += 1;
        if iters > 1100 {
            return Err(Error::NonConvergence {
                context: "generalized-Q bracket doubling".into(),
                last: hi,
                iterations: iters,
            });
        }
    }
    let mut lo = 0.0_f64;
    while hi - lo > 1e-12_f64.max(4.0 * f64::EPSILON * hi) {
        iters += 1;
        if iters > 1400 {
            return Err(Error::NonConvergence {
                context: "generalized-Q bisection".into(),
                last: 0.5 * (lo + hi),
                iterations: iters,
            });
        }
        let mid = 0.5 * (lo + hi);
        if q_slices(y, s2, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), iters))
}

/// Q-profile confidence interval for `tau^2`: the lower bound solves
/// `Q(tau2) = chi2_quantile(1 - alpha/2, k-1)`, the upper bound solves
/// `Q(tau2) = chi2_quantile(alpha/2, k-1)`; each bound is clamped to 0 when
/// its equation has no non-negative solution.
pub fn q_profile_ci(d: &Dataset, alpha: f64) -> Result<TauInterval> {
    require_k2(d.k())?;
    crate::check_probability(alpha, "alpha")?;
    let df = u32::try_from(d.k() - 1)
        .map_err(|_| Error::domain("k - 1 exceeds the supported degrees of freedom"))?;
    let y = d.estimates();
    let s2 = d.variances();
    let solve = |target: f64| -> Result<f64> {
        if q_slices(&y, &s2, 0.0) <= target {
            Ok(0.0)
        } else {
            Ok(q_root(&y, &s2, target)?.0)
        }
    };
    let lower = solve(chi_square_quantile(1.0 - alpha / 2.0, df)?)?;
    let upper = solve(chi_square_quantile(alpha / 2.0, df)?)?;
    Ok(TauInterval {
        lower,
        upper,
        alpha,
    })
}

/// Dispatches to the requested estimator (REML uses its default tolerance
/// and iteration budget).
pub fn estimate_tau2(d: &Dataset, estimator: Estimator) -> Result<TauEstimate> {
    match estimator {
        Estimator::Dl => dl_estimate(d),
        Estimator::Reml => reml_estimate(d, REML_DEFAULT_TOL, REML_DEFAULT_MAX_ITER),
        Estimator::Pm => pm_estimate(d),
    }
}
