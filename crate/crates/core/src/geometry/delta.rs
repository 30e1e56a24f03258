use crate::error::{Error, Result};
use crate::reduce;
use crate::tensor_store::{ensure_aligned, Checkpoint, ContentDigest, Layout, TensorValues};

use super::units::Unit;

/// Fine-tuning displacement `w - w0`, held in f64.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaCheckpoint {
    pub anchor_id: ContentDigest,
    pub layout: Layout,
    pub deltas: TensorValues,
}

impl DeltaCheckpoint {
    pub fn unit(&self, unit: &Unit) -> Vec<f64> {
        unit.gather(&self.deltas)
    }
}

pub fn delta(ckpt: &Checkpoint, anchor: &Checkpoint) -> Result<DeltaCheckpoint> {
    ensure_aligned(anchor, ckpt, "checkpoint")?;
    let anchor_values = anchor.values();
    let deltas = ckpt
        .tensors()
        .map(|r| {
            let base = &anchor_values[r.name()];
            let d = r.to_f64().iter().zip(base).map(|(w, w0)| w - w0).collect();
            (r.name().to_string(), d)
        })
        .collect();
    Ok(DeltaCheckpoint {
        anchor_id: anchor.digest(),
        layout: anchor.layout(),
        deltas,
    })
}

/// Below this norm a unit vector of `n` elements has no defined direction.
pub fn norm_epsilon(n: usize) -> f64 {
    1e-12 * (n as f64).sqrt()
}

/// Cosine similarity clamped to [-1, 1]; `None` when either vector is degenerate.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let eps = norm_epsilon(a.len());
    let aa = reduce::sum_squares(a);
    let bb = reduce::sum_squares(b);
    if aa.sqrt() <= eps || bb.sqrt() <= eps {
        return None;
    }
    let ab = reduce::dot(a, b);
    // sqrt(|a|^2 |b|^2) keeps cos(a, a) == 1 exactly.
    let denom = match (aa * bb).sqrt() {
        d if d.is_finite() && d > 0.0 => d,
        _ => aa.sqrt() * bb.sqrt(),
    };
    Some((ab / denom).clamp(-1.0, 1.0))
}

pub fn angle_degrees(cos: f64) -> f64 {
    cos.clamp(-1.0, 1.0).acos().to_degrees()
}

pub fn pairwise_angle(da: &DeltaCheckpoint, db: &DeltaCheckpoint, unit: &Unit) -> Result<f64> {
    if da.anchor_id != db.anchor_id {
        return Err(Error::Schema(format!(
            "deltas were taken against different anchors ({} vs {})",
            da.anchor_id.short(),
            db.anchor_id.short()
        )));
    }
    if da.layout != db.layout {
        return Err(Error::Schema("deltas have different layouts".into()));
    }
    let a = da.unit(unit);
    let b = db.unit(unit);
    cosine(&a, &b)
        .map(angle_degrees)
        .ok_or_else(|| Error::Degenerate {
            unit: unit.key.clone(),
            detail: format!(
                "a delta norm is at or below {:.3e}",
                norm_epsilon(unit.len())
            ),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::units::{plan_units, Granularity};
    use crate::tensor_store::{DType, TensorRecord};

    fn vec_ckpt(name: &str, v: &[f64]) -> Checkpoint {
        Checkpoint::from_records([
            TensorRecord::from_f64(name, DType::F64, vec![v.len()], v).unwrap()
        ])
        .unwrap()
    }

    fn angle_of(a: &[f64], b: &[f64]) -> Result<f64> {
        let anchor = vec_ckpt("w", &vec![0.0; a.len()]);
        let da = delta(&vec_ckpt("w", a), &anchor)?;
        let db = delta(&vec_ckpt("w", b), &anchor)?;
        let unit = &plan_units(&anchor.layout(), &Granularity::PerTensor)[0];
        pairwise_angle(&da, &db, unit)
    }

    #[test]
    fn self_delta_is_zero() {
        let a = vec_ckpt("w", &[1.5, -2.0, 3.25]);
        let d = delta(&a, &a).unwrap();
        assert!(d.deltas["w"].iter().all(|x| *x == 0.0));
        assert_eq!(d.anchor_id, a.digest());
    }

    #[test]
    fn scalar_delta() {
        let a = Checkpoint::from_records([
            TensorRecord::from_f64("a", DType::F32, vec![], &[5.0]).unwrap()
        ])
        .unwrap();
        let w0 =
            Checkpoint::from_records([
                TensorRecord::from_f64("a", DType::F32, vec![], &[3.0]).unwrap()
            ])
            .unwrap();
        assert_eq!(delta(&a, &w0).unwrap().deltas["a"], vec![2.0]);
    }

    #[test]
    fn reference_angles() {
        assert!((angle_of(&[3.0, 0.0], &[3.0, 3.0]).unwrap() - 45.0).abs() < 1e-12);
        assert_eq!(angle_of(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(angle_of(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 90.0);
        assert_eq!(angle_of(&[1.0, 0.0], &[-2.0, 0.0]).unwrap(), 180.0);
    }

    #[test]
    fn zero_delta_is_degenerate() {
        assert!(matches!(
            angle_of(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Degenerate { .. })
        ));
        assert!(matches!(
            angle_of(&[1e-20, 0.0], &[1.0, 0.0]),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn different_anchors_rejected() {
        let a0 = vec_ckpt("w", &[0.0, 0.0]);
        let a1 = vec_ckpt("w", &[1.0, 0.0]);
        let m = vec_ckpt("w", &[2.0, 2.0]);
        let da = delta(&m, &a0).unwrap();
        let db = delta(&m, &a1).unwrap();
        let unit = &plan_units(&a0.layout(), &Granularity::PerTensor)[0];
        assert!(matches!(
            pairwise_angle(&da, &db, unit),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn schema_mismatch_rejected() {
        let a = vec_ckpt("w", &[1.0, 2.0]);
        let b = vec_ckpt("w", &[1.0, 2.0, 3.0]);
        assert!(matches!(delta(&a, &b), Err(Error::Schema(_))));
    }
}
