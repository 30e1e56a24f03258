use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reduce;
use crate::tensor_store::{ensure_compatible, Checkpoint};

use super::center::pseudo_center;
use super::units::{plan_units, Granularity};

/// High bit set: disjoint from the streams used by synthetic sampling.
const PERTURB_STREAMS: u64 = 1 << 63;

/// Per-unit noise scales keyed by unit key.
pub type SigmaMap = BTreeMap<String, f64>;

/// Adds i.i.d. `N(0, sigma_u^2)` noise to every element of each unit.
///
/// Unit `k` (in plan order) draws from its own stream of a ChaCha8 generator
/// seeded with `seed`, so results do not depend on thread scheduling.
pub fn perturb_from_center(
    center: &Checkpoint,
    granularity: &Granularity,
    sigma: &SigmaMap,
    seed: u64,
) -> Result<Checkpoint> {
    let units = plan_units(&center.layout(), granularity);
    for u in &units {
        match sigma.get(&u.key) {
            None => {
                return Err(Error::invalid(format!(
                    "no sigma given for unit `{}`",
                    u.key
                )));
            }
            Some(s) if !(*s >= 0.0 && s.is_finite()) => {
                return Err(Error::invalid(format!(
                    "sigma for unit `{}` must be finite and >= 0, got {s}",
                    u.key
                )));
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = sigma.keys().find(|k| !units.iter().any(|u| &u.key == *k)) {
        return Err(Error::invalid(format!(
            "sigma names unit `{extra}`, which is not a {granularity} unit of this checkpoint"
        )));
    }

    let values = center.values();
    let noisy: Vec<Vec<f64>> = units
        .par_iter()
        .enumerate()
        .map(|(k, u)| {
            let s = sigma[&u.key];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(PERTURB_STREAMS | k as u64);
            u.gather(&values)
                .into_iter()
                .map(|x| {
                    let z: f64 = rng.sample(StandardNormal);
                    x + s * z
                })
                .collect()
        })
        .collect();

    let mut out = values;
    for (u, v) in units.iter().zip(&noisy) {
        u.scatter(v, &mut out);
    }
    Ok(Checkpoint::from_values(&out, &center.layout(), |n| {
        center.get(n).expect("same layout").dtype()
    })?)
}

/// Noise scales matching an ensemble's spread: for each unit, the mean
/// distance of the members to their pseudo-center divided by `sqrt(n)`.
pub fn sigma_from_ensemble(
    ensemble: &[&Checkpoint],
    granularity: &Granularity,
) -> Result<SigmaMap> {
    if ensemble.len() < 2 {
        return Err(Error::invalid("estimating sigma needs at least 2 models"));
    }
    ensure_compatible(ensemble)?;
    let center = pseudo_center(ensemble)?.values();
    let members: Vec<_> = ensemble.iter().map(|c| c.values()).collect();
    let units = plan_units(&ensemble[0].layout(), granularity);
    Ok(units
        .iter()
        .map(|u| {
            let c = u.gather(&center);
            let radii: Vec<f64> = members
                .iter()
                .map(|m| reduce::distance_squared(&u.gather(m), &c).sqrt())
                .collect();
            let (mean, _) = reduce::mean_std(&radii);
            (u.key.clone(), mean / (u.len().max(1) as f64).sqrt())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::{DType, TensorRecord};

    fn center() -> Checkpoint {
        Checkpoint::from_records([
            TensorRecord::from_f64("a", DType::F32, vec![2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
                .unwrap(),
            TensorRecord::from_f64("b", DType::F64, vec![2], &[0.5, -0.5]).unwrap(),
        ])
        .unwrap()
    }

    fn sigmas(a: f64, b: f64) -> SigmaMap {
        [("a".to_string(), a), ("b".to_string(), b)]
            .into_iter()
            .collect()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let c = center();
        let out = perturb_from_center(&c, &Granularity::PerTensor, &sigmas(0.0, 0.0), 3).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn seeded_determinism() {
        let c = center();
        let s = sigmas(0.1, 0.2);
        let x = perturb_from_center(&c, &Granularity::PerTensor, &s, 11).unwrap();
        let y = perturb_from_center(&c, &Granularity::PerTensor, &s, 11).unwrap();
        let z = perturb_from_center(&c, &Granularity::PerTensor, &s, 12).unwrap();
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn bad_sigma_rejected() {
        let c = center();
        let g = Granularity::PerTensor;
        assert!(perturb_from_center(&c, &g, &sigmas(-1.0, 0.0), 0).is_err());
        assert!(perturb_from_center(&c, &g, &sigmas(f64::NAN, 0.0), 0).is_err());
        let mut missing = sigmas(0.1, 0.1);
        missing.remove("b");
        assert!(perturb_from_center(&c, &g, &missing, 0).is_err());
        let mut extra = sigmas(0.1, 0.1);
        extra.insert("c".into(), 0.1);
        assert!(perturb_from_center(&c, &g, &extra, 0).is_err());
    }

    #[test]
    fn sigma_of_symmetric_pair() {
        // members at +-1 around zero: each is at distance sqrt(n) from the center
        let m = |s: f64| {
            Checkpoint::from_records([
                TensorRecord::from_f64("w", DType::F64, vec![4], &[s; 4]).unwrap()
            ])
            .unwrap()
        };
        let s = sigma_from_ensemble(&[&m(1.0), &m(-1.0)], &Granularity::PerTensor).unwrap();
        assert_eq!(s["w"], 1.0);
    }
}
