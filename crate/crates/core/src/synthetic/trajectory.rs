use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Granularity;
use crate::merge::stock_merge;
use crate::tensor_store::{Checkpoint, TensorValues};

use super::sample::{add_noise, layout_of, to_checkpoint};
use super::spec::SyntheticSpec;

/// Kept apart from the spec's own streams so that a run seed equal to the
/// spec seed does not replay the draws that placed `mu` and the anchor.
const TRAJECTORY_STREAM: u64 = u64::MAX;

/// Per epoch each run moves as `w <- (1 - eta) w + eta mu + s_t sigma_u xi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryParams {
    pub epochs: usize,
    /// Contraction toward `mu` per epoch, in (0, 1].
    pub step_gain: f64,
    /// Multiplier of each unit's sigma at each epoch; non-increasing.
    pub noise_scale: Vec<f64>,
    /// Restart every run from the merge of the previous epoch's endpoints.
    #[serde(default)]
    pub rebranch: bool,
    #[serde(default)]
    pub granularity: Granularity,
}

impl TrajectoryParams {
    /// Geometric decay of the noise from 1 by `decay` per epoch.
    pub fn decaying(epochs: usize, step_gain: f64, decay: f64, rebranch: bool) -> Self {
        TrajectoryParams {
            epochs,
            step_gain,
            noise_scale: (0..epochs).map(|t| decay.powi(t as i32)).collect(),
            rebranch,
            granularity: Granularity::PerTensor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("trajectories need at least 1 epoch"));
        }
        if !(self.step_gain > 0.0 && self.step_gain <= 1.0) {
            return Err(Error::invalid(format!(
                "step gain must lie in (0, 1], got {}",
                self.step_gain
            )));
        }
        if self.noise_scale.len() != self.epochs {
            return Err(Error::invalid(format!(
                "noise schedule has {} entries for {} epochs",
                self.noise_scale.len(),
                self.epochs
            )));
        }
        if self
            .noise_scale
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return Err(Error::invalid("noise scales must be finite and >= 0"));
        }
        if self.noise_scale.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("noise schedule must be non-increasing"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectories {
    /// `runs[s][t]`: endpoint of seed `s` after epoch `t + 1`.
    pub runs: Vec<Vec<Checkpoint>>,
    /// Mean of the process after each epoch, given that epoch's start point.
    pub centers: Vec<Checkpoint>,
    /// Merges of each epoch's endpoints (rebranch mode only).
    pub merges: Vec<Checkpoint>,
    pub anchor: Checkpoint,
    pub mu: Checkpoint,
}

fn contract(w: &[f64], mu: &[f64], eta: f64) -> Vec<f64> {
    // written so that eta = 1 lands on mu exactly
    w.iter()
        .zip(mu)
        .map(|(w, m)| (1.0 - eta) * w + eta * m)
        .collect()
}

/// Runs one trajectory per seed, starting at the spec's anchor.
pub fn simulate_trajectories(
    spec: &SyntheticSpec,
    params: &TrajectoryParams,
    seeds: &[u64],
) -> Result<Trajectories> {
    params.validate()?;
    if seeds.is_empty() {
        return Err(Error::invalid("simulate at least one seed"));
    }
    if params.rebranch && seeds.len() < 2 {
        return Err(Error::invalid(
            "rebranching merges runs, so it needs at least 2 seeds",
        ));
    }
    let units = spec.resolve()?;
    let layout = layout_of(&units);
    let mu: TensorValues = units
        .iter()
        .map(|u| (u.name.clone(), u.mu.clone()))
        .collect();
    let anchor_values: TensorValues = units.iter().map(|u| (u.name.clone(), u.anchor())).collect();
    let anchor = to_checkpoint(spec, &layout, &anchor_values)?;
    let eta = params.step_gain;

    let mut rngs: Vec<ChaCha8Rng> = seeds
        .iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(*s);
            rng.set_stream(TRAJECTORY_STREAM);
            rng
        })
        .collect();
    let mut states: Vec<TensorValues> = vec![anchor_values.clone(); seeds.len()];
    let mut center_state = anchor_values;
    let mut runs: Vec<Vec<Checkpoint>> = vec![Vec::with_capacity(params.epochs); seeds.len()];
    let mut centers = Vec::with_capacity(params.epochs);
    let mut merges = Vec::new();

    for &scale in &params.noise_scale {
        center_state = center_state
            .iter()
            .map(|(n, v)| (n.clone(), contract(v, &mu[n], eta)))
            .collect();
        centers.push(to_checkpoint(spec, &layout, &center_state)?);

        for ((state, rng), run) in states.iter_mut().zip(&mut rngs).zip(&mut runs) {
            let next = add_noise(
                &units,
                |u| contract(&state[&u.name], &u.mu, eta),
                scale,
                rng,
            );
            *state = next;
            run.push(to_checkpoint(spec, &layout, state)?);
        }

        if params.rebranch {
            let ends: Vec<&Checkpoint> = runs.iter().map(|r| r.last().expect("pushed")).collect();
            let (merged, _) = stock_merge(&anchor, &ends, &params.granularity)?;
            let restart = merged.values();
            for s in &mut states {
                *s = restart.clone();
            }
            center_state = restart;
            merges.push(merged);
        }
    }

    Ok(Trajectories {
        runs,
        centers,
        merges,
        anchor,
        mu: to_checkpoint(spec, &layout, &mu)?,
    })
}
