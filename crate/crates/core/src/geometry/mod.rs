//! Geometry of fine-tuned weights relative to a pre-trained anchor.

mod center;
mod delta;
mod perturb;
mod plane;
mod report;
mod shell;
mod units;

pub use center::{distance_to, pseudo_center, DistanceReport, UnitDistance};
pub use delta::{angle_degrees, cosine, delta, norm_epsilon, pairwise_angle, DeltaCheckpoint};
pub use perturb::{perturb_from_center, sigma_from_ensemble, SigmaMap};
pub use plane::{plane_grid, GridPoint, PlaneGrid, PlaneManifest};
pub use report::{geometry_report, GeometryReport, UnitGeometry};
pub use shell::{
    verify_shell_properties, PropertyCheck, PropertyReport, ShellProperty, UnitResidual,
};
pub use units::{plan_units, Granularity, Segment, Unit, UnitClass, GLOBAL_KEY};

pub(crate) use center::mean_values;
