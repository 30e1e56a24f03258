use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor_store::{Checkpoint, Layout, TensorValues};

use super::spec::{ResolvedUnit, SyntheticSpec, RESOLVE_STREAM};

/// Samples, anchor and true center of one synthetic draw.
#[derive(Clone, Debug)]
pub struct SyntheticEnsemble {
    pub models: Vec<Checkpoint>,
    pub anchor: Checkpoint,
    pub center: Checkpoint,
}

impl SyntheticEnsemble {
    pub fn model_refs(&self) -> Vec<&Checkpoint> {
        self.models.iter().collect()
    }
}

pub(crate) fn layout_of(units: &[ResolvedUnit]) -> Layout {
    units
        .iter()
        .map(|u| (u.name.clone(), u.shape.clone()))
        .collect()
}

pub(crate) fn to_checkpoint(
    spec: &SyntheticSpec,
    layout: &Layout,
    values: &TensorValues,
) -> Result<Checkpoint> {
    Ok(Checkpoint::from_values(values, layout, |_| spec.dtype)?)
}

/// Adds `scale * sigma_u * z` to every unit, with `z` standard normal.
pub(crate) fn add_noise(
    units: &[ResolvedUnit],
    base: impl Fn(&ResolvedUnit) -> Vec<f64>,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> TensorValues {
    units
        .iter()
        .map(|u| {
            let s = scale * u.sigma;
            let v = base(u)
                .into_iter()
                .map(|m| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            (u.name.clone(), v)
        })
        .collect()
}

/// Draws `n` models `w_i ~ N(mu, sigma^2 I)` per unit.
///
/// Model `i` uses stream `i + 1` of a ChaCha8 generator seeded with the spec
/// seed, so the ensemble is reproducible and independent of thread count.
pub fn sample_ensemble(spec: &SyntheticSpec, n: usize) -> Result<SyntheticEnsemble> {
    if n == 0 {
        return Err(Error::invalid("sample at least 1 model"));
    }
    let units = spec.resolve()?;
    let layout = layout_of(&units);
    let models = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(RESOLVE_STREAM + 1 + i as u64);
            let values = add_noise(&units, |u| u.mu.clone(), 1.0, &mut rng);
            to_checkpoint(spec, &layout, &values)
        })
        .collect::<Result<Vec<_>>>()?;
    let center: TensorValues = units
        .iter()
        .map(|u| (u.name.clone(), u.mu.clone()))
        .collect();
    let anchor: TensorValues = units.iter().map(|u| (u.name.clone(), u.anchor())).collect();
    Ok(SyntheticEnsemble {
        models,
        anchor: to_checkpoint(spec, &layout, &anchor)?,
        center: to_checkpoint(spec, &layout, &center)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce;
    use crate::tensor_store::to_bytes;

    #[test]
    fn zero_sigma_samples_equal_center() {
        let mut spec = SyntheticSpec::desk(1);
        for u in &mut spec.units {
            u.sigma = 0.0;
        }
        let e = sample_ensemble(&spec, 3).unwrap();
        assert!(e.models.iter().all(|m| m == &e.center));
        assert_ne!(e.anchor, e.center);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SyntheticSpec::desk(9);
        let a = sample_ensemble(&spec, 2).unwrap();
        let b = sample_ensemble(&spec, 2).unwrap();
        for (x, y) in a.models.iter().zip(&b.models) {
            assert_eq!(to_bytes(x), to_bytes(y));
        }
        let c = sample_ensemble(&spec.clone().with_seed(10), 2).unwrap();
        assert_ne!(a.models[0], c.models[0]);
        assert_ne!(a.models[0], a.models[1]);
    }

    #[test]
    fn mean_squared_radius_concentrates() {
        let spec = SyntheticSpec::desk(4);
        let e = sample_ensemble(&spec, 20).unwrap();
        let mu = e.center.values();
        let expected = 10_000.0 * 0.01f64.powi(2);
        for (name, center) in &mu {
            let r2: Vec<f64> = e
                .models
                .iter()
                .map(|m| reduce::distance_squared(&m.get(name).unwrap().to_f64(), center))
                .collect();
            let (mean, _) = reduce::mean_std(&r2);
            assert!((mean / expected - 1.0).abs() < 0.02, "{name}: {mean}");
        }
    }
}
