use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{angle_degrees, geometry_report, Granularity};
use crate::reduce;

use super::sample::sample_ensemble;
use super::spec::SyntheticSpec;

/// Closed-form predictions next to Monte Carlo measurements for one unit.
///
/// With `a = |mu - w0|^2` and `p = n sigma^2`, a delta `w - w0` has norm close
/// to `sqrt(a + p)` and two deltas have cosine close to `a / (a + p)`. The
/// spreads are first-order (delta-method) approximations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitConcentration {
    pub unit: String,
    pub n: usize,
    pub sigma: f64,
    pub offset_sq: f64,
    pub predicted_norm: f64,
    pub measured_norm_mean: f64,
    pub norm_rel_dev: f64,
    pub predicted_norm_std: f64,
    pub measured_norm_std: f64,
    /// `None` when every delta is zero and no angle exists.
    pub predicted_angle_deg: Option<f64>,
    pub measured_angle_mean: Option<f64>,
    pub predicted_angle_std: Option<f64>,
    pub measured_angle_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub samples: usize,
    pub units: Vec<UnitConcentration>,
}

impl ConcentrationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Predicted `(norm mean, norm std, cosine, cosine std)` of anchored deltas.
pub fn predicted_delta_stats(
    n: usize,
    sigma: f64,
    offset_sq: f64,
) -> (f64, f64, Option<f64>, Option<f64>) {
    let nf = n as f64;
    let a = offset_sq;
    let p = nf * sigma * sigma;
    let l2 = a + p;
    if l2 == 0.0 {
        return (0.0, 0.0, None, None);
    }
    let l = l2.sqrt();
    let norm_std = (4.0 * sigma * sigma * a + 2.0 * nf * sigma.powi(4)).sqrt() / (2.0 * l);
    let cos = a / l2;
    let cos_var = (2.0 * a * p.powi(3) + p * p * l2 * l2 + a * a * p * p) / (nf * l2.powi(4));
    (l, norm_std, Some(cos), Some(cos_var.sqrt()))
}

pub fn concentration_stats(spec: &SyntheticSpec, samples: usize) -> Result<ConcentrationReport> {
    if samples < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    let units = spec.resolve()?;
    let ensemble = sample_ensemble(spec, samples)?;
    let report = geometry_report(
        &ensemble.model_refs(),
        &ensemble.anchor,
        &Granularity::PerTensor,
    )?;

    let out = units
        .iter()
        .map(|u| {
            let g = report.unit(&u.name).expect("one unit per tensor");
            let sqrt_n = (u.dim() as f64).sqrt();
            let offset_sq = reduce::sum_squares(&u.offset);
            let (norm, norm_std, cos, cos_std) = predicted_delta_stats(u.dim(), u.sigma, offset_sq);
            let measured = g.mean_norm_per_sqrt_n * sqrt_n;
            let (angle, angle_std) = match (cos, cos_std) {
                (Some(c), Some(s)) => {
                    let sin = (1.0 - c * c).sqrt();
                    let std = if sin > 0.0 {
                        (s / sin).to_degrees()
                    } else {
                        0.0
                    };
                    (Some(angle_degrees(c)), Some(std))
                }
                _ => (None, None),
            };
            UnitConcentration {
                unit: u.name.clone(),
                n: u.dim(),
                sigma: u.sigma,
                offset_sq,
                predicted_norm: norm,
                measured_norm_mean: measured,
                norm_rel_dev: if norm > 0.0 {
                    (measured - norm) / norm
                } else {
                    measured
                },
                predicted_norm_std: norm_std,
                measured_norm_std: g.std_norm * sqrt_n,
                predicted_angle_deg: angle,
                measured_angle_mean: g.mean_angle_deg,
                predicted_angle_std: angle_std,
                measured_angle_std: g.std_angle_deg,
            }
        })
        .collect();
    Ok(ConcentrationReport {
        samples,
        units: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_reference_points() {
        // anchor at the center: orthogonal deltas, cosine variance 1/n
        let (l, _, cos, s) = predicted_delta_stats(100, 0.1, 0.0);
        assert!((l - 1.0).abs() < 1e-15);
        assert_eq!(cos, Some(0.0));
        assert!((s.unwrap() - 0.1).abs() < 1e-15);
        // offset equal to the shell radius: 60 degrees, cosine variance 7 / (16 n)
        let (l, _, cos, s) = predicted_delta_stats(100, 0.1, 1.0);
        assert!((l - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(cos, Some(0.5));
        assert!((s.unwrap().powi(2) - 7.0 / 1600.0).abs() < 1e-15);
    }

    #[test]
    fn zero_sigma_has_no_spread() {
        let mut spec = SyntheticSpec::desk(2);
        for u in &mut spec.units {
            u.sigma = 0.0;
        }
        let r = concentration_stats(&spec, 3).unwrap();
        for u in &r.units {
            assert_eq!(u.measured_norm_std, 0.0);
            assert_eq!(u.measured_angle_std, Some(0.0));
        }
    }
}
