use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::reduce;
use crate::tensor_store::{
    digest_order, ensure_aligned, ensure_compatible, Checkpoint, TensorValues,
};

use super::units::{plan_units, Granularity, UnitClass};

/// Elementwise mean of already-ordered checkpoints, accumulated in f64.
///
/// Callers fix the operand order; the reduction tree is fixed by the count.
pub(crate) fn mean_values(ordered: &[&Checkpoint]) -> TensorValues {
    let first = ordered[0];
    let names: Vec<&str> = first.names().collect();
    let n = ordered.len() as f64;
    names
        .par_iter()
        .map(|name| {
            let cols: Vec<Vec<f64>> = ordered
                .iter()
                .map(|c| c.get(name).expect("schema checked").to_f64())
                .collect();
            let len = cols[0].len();
            let mean = (0..len)
                .map(|i| reduce::pairwise_sum_by(cols.len(), |k| cols[k][i]) / n)
                .collect();
            (name.to_string(), mean)
        })
        .collect()
}

/// Elementwise mean of an ensemble in the ensemble's storage dtype.
///
/// Inputs are reduced in content-digest order, so any permutation of the
/// ensemble produces identical bytes.
pub fn pseudo_center(ensemble: &[&Checkpoint]) -> Result<Checkpoint> {
    if ensemble.is_empty() {
        return Err(Error::invalid("cannot average an empty ensemble"));
    }
    ensure_compatible(ensemble)?;
    let ordered: Vec<&Checkpoint> = digest_order(ensemble).into_iter().map(|(_, c)| c).collect();
    let first = ordered[0];
    let mean = mean_values(&ordered);
    Ok(Checkpoint::from_values(&mean, &first.layout(), |n| {
        first.get(n).expect("layout from first").dtype()
    })?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitDistance {
    pub unit: String,
    pub class: UnitClass,
    pub n: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceReport {
    pub global: f64,
    pub units: Vec<UnitDistance>,
}

/// Euclidean distance over all elements, plus per-unit distances.
pub fn distance_to(
    ckpt: &Checkpoint,
    center: &Checkpoint,
    granularity: &Granularity,
) -> Result<DistanceReport> {
    ensure_aligned(center, ckpt, "checkpoint")?;
    let a = ckpt.values();
    let c = center.values();
    let units = plan_units(&ckpt.layout(), granularity);
    let per_unit = units
        .iter()
        .map(|u| UnitDistance {
            unit: u.key.clone(),
            class: u.class,
            n: u.len(),
            distance: reduce::distance_squared(&u.gather(&a), &u.gather(&c)).sqrt(),
        })
        .collect();
    let flat_a: Vec<f64> = a.values().flatten().copied().collect();
    let flat_c: Vec<f64> = c.values().flatten().copied().collect();
    Ok(DistanceReport {
        global: reduce::distance_squared(&flat_a, &flat_c).sqrt(),
        units: per_unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::{DType, TensorRecord};

    fn scalars(pairs: &[(&str, f64)]) -> Checkpoint {
        Checkpoint::from_records(
            pairs
                .iter()
                .map(|(n, v)| TensorRecord::from_f64(*n, DType::F32, vec![], &[*v]).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn single_model_center_is_itself() {
        let a = scalars(&[("a", 2.0), ("b", -1.0)]);
        assert_eq!(pseudo_center(&[&a]).unwrap(), a);
    }

    #[test]
    fn mean_of_two_scalars() {
        let c = pseudo_center(&[&scalars(&[("a", 2.0)]), &scalars(&[("a", 4.0)])]).unwrap();
        assert_eq!(c.get("a").unwrap().to_f64(), vec![3.0]);
        assert_eq!(c.get("a").unwrap().dtype(), DType::F32);
    }

    #[test]
    fn empty_and_mismatched_ensembles_rejected() {
        assert!(pseudo_center(&[]).is_err());
        let a = scalars(&[("a", 2.0)]);
        let b = scalars(&[("b", 2.0)]);
        assert!(matches!(pseudo_center(&[&a, &b]), Err(Error::Schema(_))));
    }

    #[test]
    fn distances() {
        let c = scalars(&[("a", 1.0), ("b", 2.0)]);
        let d = distance_to(&c, &c, &Granularity::PerTensor).unwrap();
        assert_eq!(d.global, 0.0);
        let far = scalars(&[("a", 4.0), ("b", 6.0)]);
        let d = distance_to(&c, &far, &Granularity::PerTensor).unwrap();
        assert_eq!(d.global, 5.0);
        assert_eq!(d.units[0].distance, 3.0);
        assert_eq!(d.units[1].distance, 4.0);
    }
}
