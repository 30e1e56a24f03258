use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduce;
use crate::tensor_store::DType;

/// Per-unit values given literally or generated from the spec seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueSpec {
    Values(Vec<f64>),
    Constant {
        constant: f64,
    },
    /// i.i.d. `N(0, gaussian_std^2)` entries.
    Gaussian {
        gaussian_std: f64,
    },
    /// A uniformly random direction scaled to `norm`.
    Direction {
        norm: f64,
    },
}

impl Default for ValueSpec {
    fn default() -> Self {
        ValueSpec::Constant { constant: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitSpec {
    pub name: String,
    pub dim: usize,
    /// Tensor shape; defaults to `[dim]`. Its element count must equal `dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    pub sigma: f64,
    /// The true center of this unit.
    #[serde(default)]
    pub mu: ValueSpec,
    /// Places the anchor at `mu + anchor_offset`.
    #[serde(default)]
    pub anchor_offset: ValueSpec,
}

fn default_dtype() -> DType {
    DType::F32
}

/// Isotropic Gaussian ensemble: unit `k` is drawn from `N(mu_k, sigma_k^2 I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub units: Vec<UnitSpec>,
    #[serde(default = "default_dtype")]
    pub dtype: DType,
}

/// A unit with every generated value drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedUnit {
    pub name: String,
    pub shape: Vec<usize>,
    pub sigma: f64,
    pub mu: Vec<f64>,
    pub offset: Vec<f64>,
}

impl ResolvedUnit {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn anchor(&self) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.offset)
            .map(|(m, o)| m + o)
            .collect()
    }
}

/// Stream 0 of the spec seed resolves generated values; sample streams start at 1.
pub(crate) const RESOLVE_STREAM: u64 = 0;

impl SyntheticSpec {
    /// Three `100 x 100` units, `sigma = 0.01`, and an anchor offset whose
    /// squared length equals `n sigma^2`, so pairwise delta angles sit near 60 degrees.
    pub fn desk(seed: u64) -> Self {
        let n = 10_000usize;
        let sigma = 0.01;
        SyntheticSpec {
            seed,
            units: (0..3)
                .map(|k| UnitSpec {
                    name: format!("layer{k}.weight"),
                    dim: n,
                    shape: Some(vec![100, 100]),
                    sigma,
                    mu: ValueSpec::Gaussian { gaussian_std: 0.05 },
                    anchor_offset: ValueSpec::Direction {
                        norm: (n as f64 * sigma * sigma).sqrt(),
                    },
                })
                .collect(),
            dtype: DType::F32,
        }
    }

    /// Sets every unit's anchor offset to a random direction with
    /// `|offset|^2 = ratio * n sigma^2`.
    pub fn with_offset_ratio(mut self, ratio: f64) -> Self {
        for u in &mut self.units {
            u.anchor_offset = ValueSpec::Direction {
                norm: (ratio * u.dim as f64 * u.sigma * u.sigma).sqrt(),
            };
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SyntheticSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() {
            return Err(Error::invalid("synthetic spec has no units"));
        }
        let mut names: Vec<&str> = self.units.iter().map(|u| u.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("unit `{}` is listed twice", w[0])));
        }
        for u in &self.units {
            if u.dim == 0 {
                return Err(Error::invalid(format!("unit `{}` has dimension 0", u.name)));
            }
            if !(u.sigma >= 0.0 && u.sigma.is_finite()) {
                return Err(Error::invalid(format!(
                    "unit `{}` has sigma {}; it must be finite and >= 0",
                    u.name, u.sigma
                )));
            }
            if let Some(shape) = &u.shape {
                if shape.iter().product::<usize>() != u.dim {
                    return Err(Error::invalid(format!(
                        "unit `{}` has shape {shape:?} but dimension {}",
                        u.name, u.dim
                    )));
                }
            }
            for (what, v) in [("mu", &u.mu), ("anchor_offset", &u.anchor_offset)] {
                let bad = match v {
                    ValueSpec::Values(xs) if xs.len() != u.dim => {
                        Some(format!("{} values for dimension {}", xs.len(), u.dim))
                    }
                    ValueSpec::Values(xs) if xs.iter().any(|x| !x.is_finite()) => {
                        Some("non-finite value".into())
                    }
                    ValueSpec::Constant { constant } if !constant.is_finite() => {
                        Some("non-finite constant".into())
                    }
                    ValueSpec::Gaussian { gaussian_std: s } | ValueSpec::Direction { norm: s }
                        if !(*s >= 0.0 && s.is_finite()) =>
                    {
                        Some(format!("scale {s} must be finite and >= 0"))
                    }
                    _ => None,
                };
                if let Some(detail) = bad {
                    return Err(Error::invalid(format!(
                        "unit `{}` {what}: {detail}",
                        u.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn total_dim(&self) -> usize {
        self.units.iter().map(|u| u.dim).sum()
    }

    /// Draws the generated centers and offsets. Deterministic in `seed`.
    pub fn resolve(&self) -> Result<Vec<ResolvedUnit>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(RESOLVE_STREAM);
        Ok(self
            .units
            .iter()
            .map(|u| ResolvedUnit {
                name: u.name.clone(),
                shape: u.shape.clone().unwrap_or_else(|| vec![u.dim]),
                sigma: u.sigma,
                mu: realize(&u.mu, u.dim, &mut rng),
                offset: realize(&u.anchor_offset, u.dim, &mut rng),
            })
            .collect())
    }
}

fn realize(v: &ValueSpec, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match v {
        ValueSpec::Values(xs) => xs.clone(),
        ValueSpec::Constant { constant } => vec![*constant; dim],
        ValueSpec::Gaussian { gaussian_std } => (0..dim)
            .map(|_| gaussian_std * rng.sample::<f64, _>(StandardNormal))
            .collect(),
        ValueSpec::Direction { norm } => {
            if *norm == 0.0 {
                return vec![0.0; dim];
            }
            loop {
                let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let len = reduce::norm(&z);
                if len > 0.0 {
                    return z.iter().map(|x| x * norm / len).collect();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_forms() {
        let spec = SyntheticSpec::from_json(
            r#"{"seed": 7, "units": [
                {"name": "a", "dim": 2, "sigma": 0.1, "mu": [1.0, 2.0], "anchor_offset": {"norm": 3.0}},
                {"name": "b", "dim": 4, "shape": [2, 2], "sigma": 0.0, "mu": {"constant": 0.5}},
                {"name": "c", "dim": 3, "sigma": 1.0, "mu": {"gaussian_std": 2.0}}
            ]}"#,
        )
        .unwrap();
        assert_eq!(spec.dtype, DType::F32);
        let r = spec.resolve().unwrap();
        assert_eq!(r[0].mu, vec![1.0, 2.0]);
        assert!((reduce::norm(&r[0].offset) - 3.0).abs() < 1e-12);
        assert_eq!(r[1].mu, vec![0.5; 4]);
        assert_eq!(r[1].shape, vec![2, 2]);
        assert_eq!(r[1].offset, vec![0.0; 4]);
        assert_eq!(r, spec.resolve().unwrap());
    }

    #[test]
    fn invalid_specs_rejected() {
        for bad in [
            r#"{"seed": 1, "units": []}"#,
            r#"{"seed": 1, "units": [{"name": "a", "dim": 0, "sigma": 1.0}]}"#,
            r#"{"seed": 1, "units": [{"name": "a", "dim": 2, "sigma": -1.0}]}"#,
            r#"{"seed": 1, "units": [{"name": "a", "dim": 2, "sigma": 1.0, "mu": [1.0]}]}"#,
            r#"{"seed": 1, "units": [{"name": "a", "dim": 2, "shape": [3], "sigma": 1.0}]}"#,
            r#"{"seed": 1, "units": [{"name": "a", "dim": 1, "sigma": 1.0}, {"name": "a", "dim": 1, "sigma": 1.0}]}"#,
            r#"{"seed": 1, "units": [{"name": "a", "dim": 1, "sigma": 1.0, "typo": 1}]}"#,
        ] {
            assert!(SyntheticSpec::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn desk_offset_matches_shell_radius() {
        let spec = SyntheticSpec::desk(3);
        assert_eq!(spec.total_dim(), 30_000);
        for u in spec.resolve().unwrap() {
            assert!((reduce::norm(&u.offset) - 1.0).abs() < 1e-12);
        }
    }
}
