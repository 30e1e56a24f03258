use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{cosine, mean_values, norm_epsilon, plan_units, Granularity, UnitClass};
use crate::reduce;
use crate::tensor_store::{digest_order, ensure_compatible, Checkpoint, TensorValues};

use super::ratio::interpolation_ratio;

/// How one unit was merged.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitRatio {
    pub unit: String,
    pub class: UnitClass,
    /// Mean pairwise delta cosine; `None` for degenerate or unanchored units.
    pub cos_theta: Option<f64>,
    pub t: f64,
    pub raw_t: Option<f64>,
    pub clamped: bool,
    /// Fewer than two deltas had a direction, so no angle was measured.
    pub degenerate: bool,
    /// Some tensor of the unit is absent from the anchor.
    pub unanchored: bool,
    #[serde(rename = "N")]
    pub models: usize,
    pub period: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioReport {
    pub granularity: String,
    pub models: usize,
    pub units: Vec<UnitRatio>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    unit: &'a str,
    class: &'a str,
    cos_theta: Option<f64>,
    t: f64,
    clamped: bool,
    degenerate: bool,
    #[serde(rename = "N")]
    n: usize,
    period: Option<usize>,
}

impl RatioReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_ratio_csv(std::iter::once(self), w)
    }

    pub fn unit(&self, key: &str) -> Option<&UnitRatio> {
        self.units.iter().find(|u| u.unit == key)
    }
}

/// Writes several reports (for example one per period) into one table.
pub fn write_ratio_csv<'a, W: Write>(
    reports: impl IntoIterator<Item = &'a RatioReport>,
    w: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        for u in &r.units {
            out.serialize(CsvRow {
                unit: &u.unit,
                class: u.class.as_str(),
                cos_theta: u.cos_theta,
                t: u.t,
                clamped: u.clamped,
                degenerate: u.degenerate,
                n: u.models,
                period: u.period,
            })?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Every anchor tensor must exist in the models with the same shape. Model
/// tensors the anchor lacks are allowed and merged without anchoring.
fn check_anchor(anchor: &Checkpoint, model: &Checkpoint) -> Result<()> {
    for r in anchor.tensors() {
        match model.get(r.name()) {
            None => {
                return Err(Error::Schema(format!(
                    "anchor tensor `{}` is missing from the models",
                    r.name()
                )))
            }
            Some(m) if m.shape() != r.shape() => {
                return Err(Error::Schema(format!(
                    "tensor `{}` has shape {:?} in the anchor but {:?} in the models",
                    r.name(),
                    r.shape(),
                    m.shape()
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Mean cosine over pairs of non-degenerate deltas, in the given order.
fn mean_pairwise_cosine(deltas: &[Vec<f64>], eps: f64) -> Option<f64> {
    let live: Vec<&Vec<f64>> = deltas.iter().filter(|d| reduce::norm(d) > eps).collect();
    if live.len() < 2 {
        return None;
    }
    let mut cosines = Vec::with_capacity(live.len() * (live.len() - 1) / 2);
    for i in 0..live.len() {
        for j in i + 1..live.len() {
            cosines.push(cosine(live[i], live[j])?);
        }
    }
    Some(reduce::pairwise_sum(&cosines) / cosines.len() as f64)
}

/// Anchored merge: per unit, `t * mean(models) + (1 - t) * anchor` with `t`
/// set from the mean pairwise angle between the models' deltas.
///
/// Models are reduced in content-digest order, so the output bytes do not
/// depend on the order of `models`. Output tensors take the anchor's dtype.
pub fn stock_merge(
    anchor: &Checkpoint,
    models: &[&Checkpoint],
    granularity: &Granularity,
) -> Result<(Checkpoint, RatioReport)> {
    if models.len() < 2 {
        return Err(Error::invalid(format!(
            "stock merge needs at least 2 models, got {}",
            models.len()
        )));
    }
    ensure_compatible(models)?;
    check_anchor(anchor, models[0])?;

    let ordered: Vec<&Checkpoint> = digest_order(models).into_iter().map(|(_, c)| c).collect();
    let layout = ordered[0].layout();
    let mean = mean_values(&ordered);
    let anchor_values = anchor.values();
    let model_values: Vec<TensorValues> = ordered.iter().map(|c| c.values()).collect();
    let n_models = models.len();
    let units = plan_units(&layout, granularity);

    let merged: Vec<(UnitRatio, Vec<f64>)> = units
        .par_iter()
        .map(|unit| {
            let avg = unit.gather(&mean);
            let mut report = UnitRatio {
                unit: unit.key.clone(),
                class: unit.class,
                cos_theta: None,
                t: 1.0,
                raw_t: None,
                clamped: false,
                degenerate: false,
                unanchored: false,
                models: n_models,
                period: None,
            };
            if unit.segments.iter().any(|s| !anchor.contains(&s.tensor)) {
                report.unanchored = true;
                return Ok((report, avg));
            }
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
            let Some(cos) = mean_pairwise_cosine(&deltas, norm_epsilon(unit.len())) else {
                report.degenerate = true;
                return Ok((report, avg));
            };
            let ratio = interpolation_ratio(cos, n_models)?;
            report.cos_theta = Some(cos);
            report.t = ratio.t;
            report.raw_t = ratio.raw;
            report.clamped = ratio.clamped;
            let t = ratio.t;
            let out = if t == 0.0 {
                base
            } else if t == 1.0 {
                avg
            } else {
                avg.iter()
                    .zip(&base)
                    .map(|(m, w0)| t * m + (1.0 - t) * w0)
                    .collect()
            };
            Ok((report, out))
        })
        .collect::<Result<_>>()?;

    let mut values: TensorValues = layout
        .iter()
        .map(|(n, s)| (n.clone(), vec![0.0; s.iter().product()]))
        .collect();
    let mut reports = Vec::with_capacity(merged.len());
    for (unit, (report, v)) in units.iter().zip(merged) {
        if report.unanchored {
            warn!(
                "unit `{}` is absent from the anchor; using the plain average (t = 1)",
                report.unit
            );
        }
        unit.scatter(&v, &mut values);
        reports.push(report);
    }
    let first = ordered[0];
    let out = Checkpoint::from_values(&values, &layout, |n| {
        anchor
            .get(n)
            .or_else(|| first.get(n))
            .expect("tensor from the model layout")
            .dtype()
    })?;
    Ok((
        out,
        RatioReport {
            granularity: granularity.name().to_string(),
            models: n_models,
            units: reports,
        },
    ))
}
