//! Anchored closed-form merging and the baselines it is compared with.

mod interp;
mod periodic;
mod ratio;
mod soup;
mod stock;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::geometry::Granularity;
use crate::tensor_store::Checkpoint;

pub use interp::{interpolate_pair, wise_ft};
pub use periodic::{periodic_merge_replay, PeriodicReplay};
pub use ratio::{interpolation_ratio, variance_optimal_ratio, Ratio, DENOM_EPSILON};
pub use soup::{greedy_soup, uniform_soup, GreedyStep, GreedyTrace};
pub use stock::{stock_merge, write_ratio_csv, RatioReport, UnitRatio};

/// A merge recipe and its parameters, as recorded in output metadata.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MergeMethod {
    Stock {
        granularity: Granularity,
    },
    Uniform,
    /// The scorer is supplied at call time; only its description is kept.
    Greedy {
        scorer: String,
    },
    WiseFt {
        alpha: f64,
    },
    PairInterpolate {
        t: f64,
    },
}

impl MergeMethod {
    pub fn name(&self) -> &'static str {
        match self {
            MergeMethod::Stock { .. } => "stock",
            MergeMethod::Uniform => "uniform",
            MergeMethod::Greedy { .. } => "greedy",
            MergeMethod::WiseFt { .. } => "wise_ft",
            MergeMethod::PairInterpolate { .. } => "pair_interpolate",
        }
    }
}

/// Metadata for a merged checkpoint: method, parameters, input digests in the
/// given order, and the toolkit version.
pub fn provenance(method: &MergeMethod, inputs: &[&Checkpoint]) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("stockpot.method".into(), method.name().into());
    m.insert(
        "stockpot.params".into(),
        serde_json::to_string(method).expect("method serializes"),
    );
    m.insert(
        "stockpot.inputs".into(),
        inputs
            .iter()
            .map(|c| c.digest().to_hex())
            .collect::<Vec<_>>()
            .join(","),
    );
    m.insert("stockpot.version".into(), crate::VERSION.into());
    m
}
