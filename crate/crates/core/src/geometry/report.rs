use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::reduce;
use crate::tensor_store::{ensure_aligned, ensure_compatible, Checkpoint};

use super::delta::{angle_degrees, cosine, norm_epsilon};
use super::units::{plan_units, Granularity, UnitClass};

/// Angle and norm statistics of one unit across an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitGeometry {
    pub unit: String,
    pub class: UnitClass,
    pub n: usize,
    /// Mean over all pairs whose deltas are non-degenerate; `None` if there are none.
    pub mean_angle_deg: Option<f64>,
    pub std_angle_deg: Option<f64>,
    pub mean_norm_per_sqrt_n: f64,
    pub std_norm: f64,
    pub pairs: usize,
    /// Ensemble indices whose delta norm is at or below the degeneracy threshold.
    pub degenerate_members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometryReport {
    pub granularity: String,
    pub models: usize,
    pub units: Vec<UnitGeometry>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    unit: &'a str,
    class: &'a str,
    n: usize,
    mean_angle_deg: Option<f64>,
    std_angle_deg: Option<f64>,
    mean_norm_per_sqrt_n: f64,
    std_norm: f64,
    pairs: usize,
}

impl GeometryReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for u in &self.units {
            out.serialize(CsvRow {
                unit: &u.unit,
                class: u.class.as_str(),
                n: u.n,
                mean_angle_deg: u.mean_angle_deg,
                std_angle_deg: u.std_angle_deg,
                mean_norm_per_sqrt_n: u.mean_norm_per_sqrt_n,
                std_norm: u.std_norm,
                pairs: u.pairs,
            })?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn unit(&self, key: &str) -> Option<&UnitGeometry> {
        self.units.iter().find(|u| u.unit == key)
    }
}

/// Per-unit pairwise delta angles and normalized delta norms.
pub fn geometry_report(
    ensemble: &[&Checkpoint],
    anchor: &Checkpoint,
    granularity: &Granularity,
) -> Result<GeometryReport> {
    if ensemble.len() < 2 {
        return Err(Error::invalid(format!(
            "geometry needs at least 2 models, got {}",
            ensemble.len()
        )));
    }
    ensure_compatible(ensemble)?;
    ensure_aligned(anchor, ensemble[0], "ensemble")?;

    let anchor_values = anchor.values();
    let model_values: Vec<_> = ensemble.iter().map(|c| c.values()).collect();
    let units = plan_units(&anchor.layout(), granularity);

    let stats = units
        .par_iter()
        .map(|unit| {
            let base = unit.gather(&anchor_values);
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
            let sqrt_n = (unit.len() as f64).sqrt();
            let norms: Vec<f64> = deltas.iter().map(|d| reduce::norm(d) / sqrt_n).collect();
            let eps = norm_epsilon(unit.len());
            let degenerate_members: Vec<usize> = deltas
                .iter()
                .enumerate()
                .filter(|(_, d)| reduce::norm(d) <= eps)
                .map(|(i, _)| i)
                .collect();

            let mut angles = Vec::new();
            for i in 0..deltas.len() {
                for j in i + 1..deltas.len() {
                    if let Some(c) = cosine(&deltas[i], &deltas[j]) {
                        angles.push(angle_degrees(c));
                    }
                }
            }
            let (mean_angle, std_angle) = if angles.is_empty() {
                (None, None)
            } else {
                let (m, s) = reduce::mean_std(&angles);
                (Some(m), Some(s))
            };
            let (mean_norm, std_norm) = reduce::mean_std(&norms);
            let n_models = deltas.len();
            UnitGeometry {
                unit: unit.key.clone(),
                class: unit.class,
                n: unit.len(),
                mean_angle_deg: mean_angle,
                std_angle_deg: std_angle,
                mean_norm_per_sqrt_n: mean_norm,
                std_norm,
                pairs: n_models * (n_models - 1) / 2,
                degenerate_members,
            }
        })
        .collect();

    Ok(GeometryReport {
        granularity: granularity.name().to_string(),
        models: ensemble.len(),
        units: stats,
    })
}
