use crate::error::{Error, Result};
use crate::geometry::Granularity;
use crate::tensor_store::Checkpoint;

use super::stock::{stock_merge, RatioReport};

#[derive(Clone, Debug)]
pub struct PeriodicReplay {
    pub merged: Vec<Checkpoint>,
    pub reports: Vec<RatioReport>,
}

impl PeriodicReplay {
    pub fn final_merge(&self) -> &Checkpoint {
        self.merged.last().expect("at least one period")
    }
}

/// Merges the `p`-th checkpoint of every run for each period `p`.
///
/// This replays saved checkpoints; it does not restart the runs from the
/// merged weights. With a single period it is the post-training merge.
pub fn periodic_merge_replay(
    anchor: &Checkpoint,
    trajectories: &[Vec<Checkpoint>],
    granularity: &Granularity,
) -> Result<PeriodicReplay> {
    let periods = trajectories.first().map_or(0, Vec::len);
    if periods == 0 {
        return Err(Error::invalid("replay needs at least one period per run"));
    }
    if let Some((i, t)) = trajectories
        .iter()
        .enumerate()
        .find(|(_, t)| t.len() != periods)
    {
        return Err(Error::invalid(format!(
            "run {i} has {} periods but run 0 has {periods}",
            t.len()
        )));
    }
    let mut merged = Vec::with_capacity(periods);
    let mut reports = Vec::with_capacity(periods);
    for p in 0..periods {
        let at: Vec<&Checkpoint> = trajectories.iter().map(|t| &t[p]).collect();
        let (ckpt, mut report) = stock_merge(anchor, &at, granularity)?;
        for u in &mut report.units {
            u.period = Some(p + 1);
        }
        merged.push(ckpt);
        reports.push(report);
    }
    Ok(PeriodicReplay { merged, reports })
}
