use serde::Serialize;

use crate::error::{Error, Result};

/// Below this value of `1 + (N-1) cos` the ratio is pinned to 0.
pub const DENOM_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ratio {
    /// Applied ratio, always in [0, 1].
    pub t: f64,
    /// Unclamped formula value; `None` when the denominator is too small.
    pub raw: Option<f64>,
    pub clamped: bool,
}

/// `t = N cos / (1 + (N-1) cos)`, clamped to [0, 1].
pub fn interpolation_ratio(cos_theta: f64, n: usize) -> Result<Ratio> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "the ratio needs N >= 2 models, got {n}"
        )));
    }
    if !(-1.0..=1.0).contains(&cos_theta) {
        return Err(Error::invalid(format!(
            "cos(theta) must lie in [-1, 1], got {cos_theta}"
        )));
    }
    let nf = n as f64;
    let denom = 1.0 + (nf - 1.0) * cos_theta;
    if denom <= DENOM_EPSILON {
        return Ok(Ratio {
            t: 0.0,
            raw: None,
            clamped: true,
        });
    }
    let raw = nf * cos_theta / denom;
    let t = raw.clamp(0.0, 1.0);
    Ok(Ratio {
        t,
        raw: Some(raw),
        clamped: t != raw,
    })
}

/// Interpolation weight on A minimizing the expected squared distance of
/// `t A + (1-t) B` to its mean, given the covariance traces of A and B.
pub fn variance_optimal_ratio(trace_a: f64, trace_b: f64) -> Result<f64> {
    if !(trace_a >= 0.0 && trace_b >= 0.0 && trace_a.is_finite() && trace_b.is_finite()) {
        return Err(Error::invalid(format!(
            "covariance traces must be finite and >= 0, got {trace_a} and {trace_b}"
        )));
    }
    if trace_a == 0.0 && trace_b == 0.0 {
        return Err(Error::invalid(
            "both covariance traces are 0; every ratio is optimal",
        ));
    }
    Ok(trace_b / (trace_a + trace_b))
}
