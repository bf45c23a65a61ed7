//! Box domains, space-time grids, coefficient fields and grid functionals.

mod domain;
mod field;
mod grid;
mod gridfn;
mod norms;

pub use domain::{Ball, BoundedDomain, Region, WholeSpace};
pub use field::{check_integrability, CoefficientField, Regularity, ScalarMap, Usage, VectorMap, MAX_DIM};
pub use grid::{SpaceTimeGrid, SpatialGrid};
pub use gridfn::{sample_field, sample_vector_field, FieldSlice, GridFunction};
pub use norms::{
    ellipticity_check, holder_seminorm_estimate, lqp_norm, lqp_norm_fn, EllipticityReport,
    HOLDER_FULL_SCAN_NODES,
};
pub(crate) use norms::symmetric_eigenvalues;
