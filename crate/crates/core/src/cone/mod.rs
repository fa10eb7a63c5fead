//! Partitions, the cones `C^j` and `(C^j)*`, step paths and discrete measures.

mod isotonic;
mod measure;
mod partition;
mod path;
mod point;

pub use isotonic::{isotonic_regression, pava_by, project_monotone_box};
pub use measure::{measure_to_quantile, quantile_to_measure, wasserstein_p, DiscreteMeasure};
pub use partition::{Partition, PartitionSpec};
#[allow(unused_imports)]
pub(crate) use path::overlaps;
pub use path::{coarsen, lift_lj, project_pj, refine_point, restrict_point, PathRole, StepPath};
pub use point::{BoundaryClass, ConePoint};
