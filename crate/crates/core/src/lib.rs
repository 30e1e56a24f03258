//! Checkpoint geometry and anchored weight merging.
//!
//! * [`tensor_store`] reads and writes the tensor container format.
//! * [`geometry`] measures fine-tuning deltas: angles, norms, centers,
//!   distances, shell properties, landscape planes and perturbations.
//! * [`merge`] implements the anchored closed-form merge and the baselines it
//!   is compared with (uniform and greedy soups, WiSE-FT, pair interpolation).
//! * [`synthetic`] generates Gaussian ensembles and trajectories with known
//!   centers, plus brute-force oracles for the closed forms.

pub mod error;
pub mod geometry;
pub mod merge;
pub mod parallel;
pub mod reduce;
pub mod synthetic;
pub mod tensor_store;

pub use error::{Error, Result};
pub use geometry::Granularity;
pub use tensor_store::{Checkpoint, DType, TensorRecord};

/// Crate version recorded in the metadata of written checkpoints.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
