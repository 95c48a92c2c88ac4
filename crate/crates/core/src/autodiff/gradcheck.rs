//! Central finite differences, used as an independent oracle for the tape.

use super::params::ModelParams;
use crate::error::{Error, Result};

/// Estimates `df/dp` coordinate by coordinate as
/// `(f(p + eps) - f(p - eps)) / (2 eps)`.
pub fn finite_diff_oracle<F>(f: F, params: &ModelParams, eps: f64) -> Result<ModelParams>
where
    F: Fn(&ModelParams) -> Result<f64>,
{
    stencil(f, params, eps, &[(1.0, 0.5), (-1.0, -0.5)])
}

/// Five-point central differences,
/// `(-f(p + 2e) + 8 f(p + e) - 8 f(p - e) + f(p - 2e)) / (12 e)`.
/// Truncation error is O(eps^4), so a larger `eps` (around 1e-3) keeps
/// round-off down as well.
pub fn finite_diff_oracle_o4<F>(f: F, params: &ModelParams, eps: f64) -> Result<ModelParams>
where
    F: Fn(&ModelParams) -> Result<f64>,
{
    let w = 1.0 / 12.0;
    stencil(f, params, eps, &[(2.0, -w), (1.0, 8.0 * w), (-1.0, -8.0 * w), (-2.0, w)])
}

/// `sum_k weight_k * f(p + offset_k * eps) / eps` per coordinate.
fn stencil<F>(f: F, params: &ModelParams, eps: f64, taps: &[(f64, f64)]) -> Result<ModelParams>
where
    F: Fn(&ModelParams) -> Result<f64>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Contract(format!("eps must be positive, got {eps}")));
    }
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let n = params.get(name).map(|t| t.len()).unwrap_or(0);
        for i in 0..n {
            let orig = params.get(name).unwrap().values()[i];
            let mut acc = 0.0;
            for &(offset, weight) in taps {
                probe.get_mut(name).unwrap().values_mut()[i] = orig + offset * eps;
                acc += weight * finite(f(&probe)?)?;
            }
            probe.get_mut(name).unwrap().values_mut()[i] = orig;
            out.get_mut(name).unwrap().values_mut()[i] = acc / eps;
        }
    }
    Ok(out)
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("objective returned non-finite value {v}")))
    }
}

/// Largest coordinate-wise relative error `|a - b| / max(|a|, |b|, floor)`.
///
/// `floor` keeps coordinates whose true gradient is (near) zero from
/// dominating the statistic with pure round-off.
pub fn max_relative_error(a: &ModelParams, b: &ModelParams, floor: f64) -> Result<f64> {
    a.check_same_layout(b)?;
    Ok(a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max))
}
