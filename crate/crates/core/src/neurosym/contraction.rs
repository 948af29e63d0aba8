use serde::Serialize;

use crate::error::{Error, Result};

/// Observed values may exceed a bound by this much and still satisfy it.
pub const BOUND_SLACK: f64 = 1e-6;
/// Smallest admissible fitted factor.
const C_MIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    Symbolic,
    Causal,
    Statistical,
    /// The whole composed step.
    Overall,
}

/// A fitted one-step bound `D' ≤ c·D + δ` and how well data obey it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionReport {
    pub component: Component,
    /// `(D, D')` pairs the fit used.
    pub pairs: Vec<(f64, f64)>,
    pub c: f64,
    /// Smallest `δ ≥ 0` with `D' ≤ c·D + δ` on every pair, given `c`.
    pub delta: f64,
    /// Intercept of the least-squares fit.
    pub ls_delta: f64,
    /// Least-squares residuals.
    pub residual_max: f64,
    pub residual_rms: f64,
    /// Observed values the bound is checked against.
    pub observed: Vec<f64>,
    /// For a series: the iterated bound from `D⁰`. For pairs: `c·D + δ`.
    pub bound: Vec<f64>,
    pub min_slack: f64,
    pub bound_satisfied: bool,
    /// `mean(D') / mean(D)`.
    pub measured_factor: Option<f64>,
}

/// `cⁿ·D⁰ + δ·Σ_{i<n} cⁱ`.
pub fn iterated_bound(c: f64, delta: f64, d0: f64, n: usize) -> Result<f64> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::out_of_range("c", c, "(0, 1]"));
    }
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::out_of_range("delta", delta, "[0, ∞)"));
    }
    let n_i = n.min(i32::MAX as usize) as i32;
    let cn = c.powi(n_i);
    let geometric = if c == 1.0 { n as f64 } else { (1.0 - cn) / (1.0 - c) };
    Ok(cn * d0 + delta * geometric)
}

fn sse(pairs: &[(f64, f64)], c: f64, d: f64) -> f64 {
    pairs.iter().map(|&(x, y)| (y - c * x - d).powi(2)).sum()
}

/// Least squares for `y ≈ c·x + δ` with `c ∈ (0,1]`, `δ ≥ 0`. A degenerate
/// design (all `x` equal) resolves to `c = 1`.
fn constrained_fit(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let scale = pairs.iter().map(|p| p.0 * p.0).sum::<f64>();
    if sxx <= 1e-24 * scale.max(f64::MIN_POSITIVE) {
        return (1.0, (my - mx).max(0.0));
    }
    let c = sxy / sxx;
    let d = my - c * mx;
    if c > 0.0 && c <= 1.0 && d >= 0.0 {
        return (c, d);
    }
    // Convex objective: the constrained optimum is the best of the edge optima.
    let sxx0: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let sxy0: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    let through_origin = if sxx0 > 0.0 { sxy0 / sxx0 } else { 1.0 };
    [
        (through_origin.clamp(C_MIN, 1.0), 0.0),
        (1.0, (my - mx).max(0.0)),
        (C_MIN, (my - C_MIN * mx).max(0.0)),
    ]
    .into_iter()
    .min_by(|a, b| sse(pairs, a.0, a.1).total_cmp(&sse(pairs, b.0, b.1)))
    .expect("non-empty")
}

fn check_finite(values: impl Iterator<Item = f64>) -> Result<()> {
    for (i, v) in values.enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NonFiniteSeries(i));
        }
    }
    Ok(())
}

fn fit(pairs: &[(f64, f64)]) -> (f64, f64, f64, f64, f64) {
    let (c, ls_delta) = constrained_fit(pairs);
    let residuals: Vec<f64> = pairs.iter().map(|&(x, y)| y - c * x - ls_delta).collect();
    let residual_max = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let residual_rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    let delta = pairs.iter().fold(0.0f64, |m, &(x, y)| m.max(y - c * x));
    (c, delta, ls_delta, residual_max, residual_rms)
}

fn factor(pairs: &[(f64, f64)]) -> Option<f64> {
    let sx: f64 = pairs.iter().map(|p| p.0).sum();
    let sy: f64 = pairs.iter().map(|p| p.1).sum();
    (sx > 0.0).then(|| sy / sx)
}

/// Fits `D^{t+1} ≈ c·D^t + δ` over consecutive values and checks the
/// iterated bound from `D⁰` at every `n`.
pub fn estimate_contraction(series: &[f64], component: Component) -> Result<ContractionReport> {
    if series.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 values to fit a contraction, got {}",
            series.len()
        )));
    }
    check_finite(series.iter().copied())?;
    let pairs: Vec<(f64, f64)> = series.windows(2).map(|w| (w[0], w[1])).collect();
    let (c, delta, ls_delta, residual_max, residual_rms) = fit(&pairs);
    let bound = (0..series.len())
        .map(|n| iterated_bound(c, delta, series[0], n))
        .collect::<Result<Vec<_>>>()?;
    let min_slack = bound
        .iter()
        .zip(series)
        .map(|(b, d)| b - d)
        .fold(f64::INFINITY, f64::min);
    Ok(ContractionReport {
        component,
        measured_factor: factor(&pairs),
        pairs,
        c,
        delta,
        ls_delta,
        residual_max,
        residual_rms,
        observed: series.to_vec(),
        bound,
        min_slack,
        bound_satisfied: min_slack >= -BOUND_SLACK,
    })
}

/// Fits a one-step bound to arbitrary `(before, after)` pairs.
pub fn estimate_contraction_pairs(pairs: &[(f64, f64)], component: Component) -> Result<ContractionReport> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 pairs to fit a contraction".into(),
        ));
    }
    check_finite(pairs.iter().flat_map(|p| [p.0, p.1]))?;
    let (c, delta, ls_delta, residual_max, residual_rms) = fit(pairs);
    let bound: Vec<f64> = pairs.iter().map(|p| c * p.0 + delta).collect();
    let observed: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let min_slack = bound
        .iter()
        .zip(&observed)
        .map(|(b, d)| b - d)
        .fold(f64::INFINITY, f64::min);
    Ok(ContractionReport {
        component,
        pairs: pairs.to_vec(),
        c,
        delta,
        ls_delta,
        residual_max,
        residual_rms,
        observed,
        bound,
        min_slack,
        bound_satisfied: min_slack >= -BOUND_SLACK,
        measured_factor: factor(pairs),
    })
}
