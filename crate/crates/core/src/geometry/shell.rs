//! Checks of the thin-shell structure of an ensemble around a center.
//!
//! With deltas `d_i = w_i - w0` and `m = center - w0`, per unit:
//!
//! * lemma: `|d_i . m - m . m| / (|d_i| |m|)` is small for every `i`;
//! * thin shell: `|d_i - m|` has small relative spread;
//! * anchor orthogonality: `w0 - center = -m` is orthogonal to every `d_i - m`;
//! * mutual orthogonality: `d_i - m` are pairwise orthogonal.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::reduce;
use crate::tensor_store::{ensure_aligned, ensure_compatible, Checkpoint};

use super::delta::{cosine, norm_epsilon};
use super::units::{plan_units, Granularity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShellProperty {
    Lemma,
    ThinShell,
    AnchorOrthogonality,
    MutualOrthogonality,
}

impl ShellProperty {
    pub const ALL: [ShellProperty; 4] = [
        ShellProperty::Lemma,
        ShellProperty::ThinShell,
        ShellProperty::AnchorOrthogonality,
        ShellProperty::MutualOrthogonality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ShellProperty::Lemma => "lemma",
            ShellProperty::ThinShell => "thin_shell",
            ShellProperty::AnchorOrthogonality => "anchor_orthogonality",
            ShellProperty::MutualOrthogonality => "mutual_orthogonality",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitResidual {
    pub unit: String,
    /// `None` when the unit is degenerate for this property.
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: ShellProperty,
    pub max_residual: Option<f64>,
    pub tolerance: f64,
    /// Holds when at least one unit was evaluated and every evaluated unit is
    /// within tolerance. Degenerate units are listed and excluded.
    pub pass: bool,
    pub degenerate_units: Vec<String>,
    pub units: Vec<UnitResidual>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub tolerance: f64,
    pub pass: bool,
    pub properties: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn get(&self, p: ShellProperty) -> &PropertyCheck {
        self.properties
            .iter()
            .find(|c| c.property == p)
            .expect("every property is checked")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            unit: &'a str,
            property: &'a str,
            residual: Option<f64>,
            tolerance: f64,
            degenerate: bool,
        }
        let mut out = csv::Writer::from_writer(w);
        for check in &self.properties {
            for u in &check.units {
                out.serialize(Row {
                    unit: &u.unit,
                    property: check.property.as_str(),
                    residual: u.residual,
                    tolerance: check.tolerance,
                    degenerate: u.residual.is_none(),
                })?;
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn unit_residuals(deltas: &[Vec<f64>], m: &[f64]) -> [Option<f64>; 4] {
    let n = m.len();
    let eps = norm_epsilon(n);
    let m_norm = reduce::norm(m);
    let mm = reduce::sum_squares(m);

    let lemma = (|| {
        if m_norm <= eps {
            return None;
        }
        let mut worst: f64 = 0.0;
        for d in deltas {
            let dn = reduce::norm(d);
            if dn <= eps {
                return None;
            }
            worst = worst.max((reduce::dot(d, m) - mm).abs() / (dn * m_norm));
        }
        Some(worst)
    })();

    let centered: Vec<Vec<f64>> = deltas
        .iter()
        .map(|d| d.iter().zip(m).map(|(a, b)| a - b).collect())
        .collect();
    let radii: Vec<f64> = centered.iter().map(|c| reduce::norm(c)).collect();
    let any_centered_degenerate = radii.iter().any(|r| *r <= eps);

    let thin_shell = if any_centered_degenerate {
        None
    } else {
        let (mean, std) = reduce::mean_std(&radii);
        Some(std / mean)
    };

    let neg_m: Vec<f64> = m.iter().map(|x| -x).collect();
    let anchor_orth = if any_centered_degenerate || m_norm <= eps {
        None
    } else {
        centered
            .iter()
            .map(|c| cosine(&neg_m, c).map(f64::abs))
            .try_fold(0.0f64, |acc, c| c.map(|c| acc.max(c)))
    };

    let mutual = if any_centered_degenerate {
        None
    } else {
        let mut worst: Option<f64> = Some(0.0);
        'outer: for i in 0..centered.len() {
            for j in i + 1..centered.len() {
                match cosine(&centered[i], &centered[j]) {
                    Some(c) => worst = worst.map(|w| w.max(c.abs())),
                    None => {
                        worst = None;
                        break 'outer;
                    }
                }
            }
        }
        worst
    };

    [lemma, thin_shell, anchor_orth, mutual]
}

/// Measures the four shell properties per unit against `center`.
pub fn verify_shell_properties(
    ensemble: &[&Checkpoint],
    anchor: &Checkpoint,
    center: &Checkpoint,
    tolerance: f64,
    granularity: &Granularity,
) -> Result<PropertyReport> {
    if ensemble.len() < 3 {
        return Err(Error::invalid(format!(
            "shell verification needs at least 3 models, got {}",
            ensemble.len()
        )));
    }
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(Error::invalid(format!(
            "tolerance must be >= 0, got {tolerance}"
        )));
    }
    ensure_compatible(ensemble)?;
    ensure_aligned(anchor, ensemble[0], "ensemble")?;
    ensure_aligned(anchor, center, "center")?;

    let anchor_values = anchor.values();
    let center_values = center.values();
    let model_values: Vec<_> = ensemble.iter().map(|c| c.values()).collect();
    let units = plan_units(&anchor.layout(), granularity);

    let per_unit: Vec<[Option<f64>; 4]> = units
        .par_iter()
        .map(|unit| {
            let base = unit.gather(&anchor_values);
            let m: Vec<f64> = unit
                .gather(&center_values)
                .iter()
                .zip(&base)
                .map(|(c, w0)| c - w0)
                .collect();
            let deltas: Vec<Vec<f64>> = model_values
                .iter()
                .map(|v| {
                    unit.gather(v)
                        .iter()
                        .zip(&base)
                        .map(|(w, w0)| w - w0)
                        .collect()
                })
                .collect();
            unit_residuals(&deltas, &m)
        })
        .collect();

    let properties: Vec<PropertyCheck> = ShellProperty::ALL
        .iter()
        .enumerate()
        .map(|(k, &property)| {
            let residuals: Vec<UnitResidual> = units
                .iter()
                .zip(&per_unit)
                .map(|(u, r)| UnitResidual {
                    unit: u.key.clone(),
                    residual: r[k],
                })
                .collect();
            let degenerate_units: Vec<String> = residuals
                .iter()
                .filter(|r| r.residual.is_none())
                .map(|r| r.unit.clone())
                .collect();
            let max_residual = residuals
                .iter()
                .filter_map(|r| r.residual)
                .fold(None, |acc: Option<f64>, r| {
                    Some(acc.map_or(r, |a| a.max(r)))
                });
            let pass = matches!(max_residual, Some(m) if m <= tolerance);
            PropertyCheck {
                property,
                max_residual,
                tolerance,
                pass,
                degenerate_units,
                units: residuals,
            }
        })
        .collect();

    Ok(PropertyReport {
        tolerance,
        pass: properties.iter().all(|p| p.pass),
        properties,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::{DType, TensorRecord};

    fn ckpt(v: &[f64]) -> Checkpoint {
        Checkpoint::from_records([
            TensorRecord::from_f64("w", DType::F64, vec![v.len()], v).unwrap()
        ])
        .unwrap()
    }

    #[test]
    fn exact_simplex_passes_at_zero_tolerance() {
        // m = e0, d_i = m + e_i: the ideal geometry with cos(theta) = 1/2.
        let anchor = ckpt(&[0.0; 4]);
        let center = ckpt(&[1.0, 0.0, 0.0, 0.0]);
        let models = [
            ckpt(&[1.0, 1.0, 0.0, 0.0]),
            ckpt(&[1.0, 0.0, 1.0, 0.0]),
            ckpt(&[1.0, 0.0, 0.0, 1.0]),
        ];
        let refs: Vec<&Checkpoint> = models.iter().collect();
        let r =
            verify_shell_properties(&refs, &anchor, &center, 0.0, &Granularity::PerTensor).unwrap();
        assert!(r.pass, "{r:?}");
        for p in &r.properties {
            assert_eq!(p.max_residual, Some(0.0));
        }
    }

    #[test]
    fn identical_models_are_degenerate() {
        let anchor = ckpt(&[0.0, 0.0]);
        let m = ckpt(&[1.0, 1.0]);
        let r = verify_shell_properties(&[&m, &m, &m], &anchor, &m, 0.05, &Granularity::PerTensor)
            .unwrap();
        assert!(!r.pass);
        for p in [
            ShellProperty::ThinShell,
            ShellProperty::AnchorOrthogonality,
            ShellProperty::MutualOrthogonality,
        ] {
            assert_eq!(r.get(p).degenerate_units, vec!["w".to_string()]);
            assert!(!r.get(p).pass);
        }
        // lemma only needs |d_i| and |m|, both fine here: d_i = m exactly
        assert_eq!(r.get(ShellProperty::Lemma).max_residual, Some(0.0));
    }

    #[test]
    fn needs_three_models() {
        let a = ckpt(&[0.0]);
        assert!(verify_shell_properties(&[&a, &a], &a, &a, 0.1, &Granularity::Global).is_err());
    }
}
