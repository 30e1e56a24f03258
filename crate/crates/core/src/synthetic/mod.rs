//! Gaussian ensembles with known centers, a training-trajectory simulator,
//! and brute-force oracles for the closed-form ratios.

mod concentration;
mod oracle;
mod sample;
mod spec;
mod trajectory;

pub use concentration::{
    concentration_stats, predicted_delta_stats, ConcentrationReport, UnitConcentration,
};
pub use oracle::{brute_force_optimal_t, monte_carlo_pair_ratio};
pub use sample::{sample_ensemble, SyntheticEnsemble};
pub use spec::{ResolvedUnit, SyntheticSpec, UnitSpec, ValueSpec};
pub use trajectory::{simulate_trajectories, Trajectories, TrajectoryParams};
