//! Analysis report rendering: aligned key-value table, flat JSON, and a
//! fixed-width text forest plot.
//!
//! Every numeric field goes through one shared 6-significant-digit
//! formatter so the three formats can never disagree, and each emitted
//! number is re-parseable to the printed precision.

use anyhow::{anyhow, Result};
use remeta::{std_normal_quantile, AnalysisResult, Dataset};

/// Formats with 6 significant digits: plain decimal notation in
/// [1e-4, 1e6), scientific outside, exact `0` for zero.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let ax = x.abs();
    if !(1e-4..1e6).contains(&ax) {
        return format!("{x:.5e}");
    }
    let exponent = ax.log10().floor() as i32;
    let decimals = (5 - exponent).max(0) as usize;
    format!("{x:.decimals$}")
}

/// The flat key-value view of a result, in stable order. The same pairs
/// feed both the table and the JSON rendering.
fn flat_fields(r: &AnalysisResult) -> Vec<(&'static str, String)> {
    vec![
        ("k", r.k.to_string()),
        ("estimator", r.estimator.tag().to_string()),
        ("alpha", fmt_sig(r.alpha)),
        ("tau2_hat", fmt_sig(r.tau2_hat)),
        ("i2_hat", fmt_sig(r.i2_hat)),
        ("mu_hat", fmt_sig(r.mu_hat)),
        ("sigma_mu_hat", fmt_sig(r.sigma_mu_hat)),
        ("q", fmt_sig(r.q)),
        ("q_star", fmt_sig(r.q_star)),
        ("ci_normal_lower", fmt_sig(r.ci_normal.lower)),
        ("ci_normal_upper", fmt_sig(r.ci_normal.upper)),
        ("ci_hksj_lower", fmt_sig(r.ci_hksj.lower)),
        ("ci_hksj_upper", fmt_sig(r.ci_hksj.upper)),
        ("ci_mkh_lower", fmt_sig(r.ci_mkh.lower)),
        ("ci_mkh_upper", fmt_sig(r.ci_mkh.upper)),
    ]
}

/// Aligned two-column table.
pub fn render_table(r: &AnalysisResult) -> String {
    let fields = flat_fields(r);
    let width = fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (key, value) in fields {
        out.push_str(&format!("{key:<width$}  {value}\n"));
    }
    out
}

/// Flat JSON object with the same keys and values as the table.
pub fn render_json(r: &AnalysisResult) -> String {
    let mut out = String::from("{\n");
    let fields = flat_fields(r);
    let last = fields.len() - 1;
    for (i, (key, value)) in fields.iter().enumerate() {
        // `estimator` is a string; everything else is numeric. Numeric
        // strings from fmt_sig are valid JSON numbers (non-finite values
        // cannot occur in a successfully computed result).
        let rendered = if *key == "estimator" {
            format!("\"{value}\"")
        } else {
            value.clone()
        };
        let comma = if i == last { "" } else { "," };
        out.push_str(&format!("  \"{key}\": {rendered}{comma}\n"));
    }
    out.push_str("}\n");
    out
}

/// Width of the bar region of the forest plot, in characters.
const BAR_WIDTH: usize = 41;

/// Fixed-width text forest plot: one row per study showing the study-level
/// normal interval `y_i +/- z * s_i`, a separator, then the three pooled
/// rows (NORMAL / HKSJ / MKH). Each interval is drawn on a shared
/// monospaced axis with `|` markers at its bounds and `x` at its center;
/// the bottom scale line marks the plot limits and the zero line.
pub fn render_forest(d: &Dataset, r: &AnalysisResult) -> Result<String> {
    let z = std_normal_quantile(1.0 - r.alpha / 2.0).map_err(|e| anyhow!("{e}"))?;
    let mut rows: Vec<(String, f64, f64, f64)> = Vec::new();
    for s in d.studies() {
        let half = z * s.stderr();
        rows.push((
            s.label().to_string(),
            s.estimate(),
            s.estimate() - half,
            s.estimate() + half,
        ));
    }
    let pooled_from = |label: &str, lo: f64, hi: f64| {
        (label.to_string(), r.mu_hat, lo, hi)
    };
    let pooled = vec![
        pooled_from("NORMAL", r.ci_normal.lower, r.ci_normal.upper),
        pooled_from("HKSJ", r.ci_hksj.lower, r.ci_hksj.upper),
        pooled_from("MKH", r.ci_mkh.lower, r.ci_mkh.upper),
    ];

    let all = rows.iter().chain(pooled.iter());
    let plot_lo = all
        .clone()
        .map(|(_, _, lo, _)| *lo)
        .fold(f64::INFINITY, f64::min);
    let plot_hi = all
        .map(|(_, _, _, hi)| *hi)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = plot_hi - plot_lo;
    let col = |x: f64| -> usize {
        if span <= 0.0 {
            return BAR_WIDTH / 2;
        }
        let t = ((x - plot_lo) / span).clamp(0.0, 1.0);
        (t * (BAR_WIDTH - 1) as f64).round() as usize
    };

    let label_w = rows
        .iter()
        .chain(pooled.iter())
        .map(|(l, _, _, _)| l.len())
        .max()
        .unwrap_or(0);
    let num_w = rows
        .iter()
        .chain(pooled.iter())
        .flat_map(|(_, c, lo, hi)| [fmt_sig(*c).len(), fmt_sig(*lo).len(), fmt_sig(*hi).len()])
        .max()
        .unwrap_or(0);

    let draw = |center: f64, lo: f64, hi: f64| -> String {
        let mut bar = vec![b' '; BAR_WIDTH];
        let (l, u) = (col(lo), col(hi));
        for cell in bar.iter_mut().take(u + 1).skip(l) {
            *cell = b'-';
        }
        bar[l] = b'|';
        bar[u] = b'|';
        bar[col(center)] = b'x';
        String::from_utf8(bar).expect("ASCII bar")
    };

    let mut out = String::new();
    let fmt_prefix = |(label, center, lo, hi): &(String, f64, f64, f64)| {
        format!(
            "{label:<label_w$}  {c:>num_w$}  [{l:>num_w$}, {h:>num_w$}]  ",
            c = fmt_sig(*center),
            l = fmt_sig(*lo),
            h = fmt_sig(*hi),
        )
    };
    // All prefixes share one width because every column is fixed-width.
    let text_w = fmt_prefix(&rows[0]).len();
    let fmt_row = |row: &(String, f64, f64, f64)| {
        format!("{}{}\n", fmt_prefix(row), draw(row.1, row.2, row.3))
    };
    for row in &rows {
        out.push_str(&fmt_row(row));
    }
    out.push_str(&format!("{}\n", "-".repeat(text_w + BAR_WIDTH)));
    for row in &pooled {
        out.push_str(&fmt_row(row));
    }

    // Bottom scale: plot limits at the edges, `0` where the zero line
    // falls inside the plotted range.
    let mut axis = vec![b'-'; BAR_WIDTH];
    axis[0] = b'|';
    axis[BAR_WIDTH - 1] = b'|';
    if plot_lo < 0.0 && plot_hi > 0.0 {
        axis[col(0.0)] = b'0';
    }
    out.push_str(&format!(
        "{:>pad$}{}\n",
        "",
        String::from_utf8(axis).expect("ASCII axis"),
        pad = text_w,
    ));
    let lo_s = fmt_sig(plot_lo);
    let hi_s = fmt_sig(plot_hi);
    let gap = (text_w + BAR_WIDTH).saturating_sub(text_w + lo_s.len() + hi_s.len());
    out.push_str(&format!(
        "{:>pad$}{lo_s}{:>gap$}{hi_s}\n",
        "",
        "",
        pad = text_w,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use remeta::{analyze, Estimator, Study};

    fn hinks_like() -> Dataset {
        Dataset::new(vec![
            Study::new("Study 1", -0.2072, 0.0817).unwrap(),
            Study::new("Study 2", -0.1154, 0.098).unwrap(),
            Study::new("Study 3", -0.2135, 0.1225).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn fmt_sig_examples() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(1.0), "1.00000");
        assert_eq!(fmt_sig(0.05), "0.0500000");
        assert_eq!(fmt_sig(-0.185325141), "-0.185325");
        assert_eq!(fmt_sig(123.4567891), "123.457");
        assert_eq!(fmt_sig(0.000123456789), "0.000123457");
        assert_eq!(fmt_sig(1.23456789e-7), "1.23457e-7");
        assert_eq!(fmt_sig(9.87654321e8), "9.87654e8");
        assert_eq!(fmt_sig(f64::NAN), "NaN");
    }

    #[test]
    fn fmt_sig_output_reparses_to_printed_precision() {
        for &x in &[0.05, -0.185325, 3.0e-9, 123456.78, 0.9999995] {
            let printed = fmt_sig(x);
            let back: f64 = printed.parse().unwrap();
            let rel = if x == 0.0 {
                back.abs()
            } else {
                ((back - x) / x).abs()
            };
            assert!(rel < 1e-5, "{x} printed as {printed} reparsed as {back}");
        }
    }

    #[test]
    fn table_lists_all_fields_aligned() {
        let d = hinks_like();
        let r = analyze(&d, Estimator::Dl, 0.05).unwrap();
        let t = render_table(&r);
        for key in [
            "k", "estimator", "alpha", "tau2_hat", "i2_hat", "mu_hat", "sigma_mu_hat", "q",
            "q_star", "ci_normal_lower", "ci_mkh_upper",
        ] {
            assert!(t.lines().any(|l| l.starts_with(key)), "missing {key}");
        }
        assert!(t.contains("estimator"));
        assert!(t.lines().any(|l| l.starts_with("tau2_hat") && l.ends_with('0')));
    }

    #[test]
    fn json_is_flat_and_has_stable_keys() {
        let d = hinks_like();
        let r = analyze(&d, Estimator::Pm, 0.05).unwrap();
        let j = render_json(&r);
        assert!(j.starts_with("{\n") && j.ends_with("}\n"));
        assert!(j.contains("\"estimator\": \"PM\""));
        assert!(j.contains("\"k\": 3"));
        assert!(j.contains("\"ci_mkh_upper\": "));
        // No nested objects: every line is either a brace or a flat pair.
        for line in j.lines() {
            let l = line.trim();
            assert!(l == "{" || l == "}" || l.starts_with('"'), "line: {line}");
        }
    }

    #[test]
    fn forest_layout_and_determinism() {
        let d = hinks_like();
        let r = analyze(&d, Estimator::Dl, 0.05).unwrap();
        let f1 = render_forest(&d, &r).unwrap();
        let f2 = render_forest(&d, &r).unwrap();
        assert_eq!(f1, f2);
        for label in ["Study 1", "Study 2", "Study 3", "NORMAL", "HKSJ", "MKH"] {
            assert!(f1.contains(label), "missing {label}");
        }
        let lines: Vec<&str> = f1.lines().collect();
        // 3 study rows, separator, 3 pooled rows, axis, scale labels.
        assert_eq!(lines.len(), 9);
        assert!(lines[3].chars().all(|c| c == '-'));
        for row in [0, 1, 2, 4, 5, 6] {
            assert!(lines[row].contains('x'), "row {row} lacks a center marker");
            assert!(lines[row].matches('|').count() >= 1, "row {row} lacks bounds");
        }
        // The zero line is inside the plotted range here (the MKH interval
        // crosses 0), so the axis marks it.
        assert!(lines[7].contains('0'));
    }

    #[test]
    fn forest_rows_share_one_scale() {
        let d = hinks_like();
        let r = analyze(&d, Estimator::Dl, 0.05).unwrap();
        let f = render_forest(&d, &r).unwrap();
        let lines: Vec<&str> = f.lines().collect();
        let width = lines[0].len();
        for l in &lines[..7] {
            assert_eq!(l.len(), width, "ragged forest line: {l:?}");
        }
    }
}
