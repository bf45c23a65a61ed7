//! Fixtures shared by the benchmarks: the standard threshold-OU field, its
//! domain and the grids the acceptance runs use.

pub use roughsde::scenarios::ThresholdOu;
pub use roughsde::{BoundedDomain, CoefficientField, FieldSlice, SpaceTimeGrid, SpatialGrid, StreamSpec};

pub fn threshold_ou() -> CoefficientField {
    ThresholdOu::default().field().expect("default scenario is valid")
}

pub fn unit_domain() -> BoundedDomain {
    BoundedDomain::interval(-1.0, 1.0).expect("valid interval")
}

pub fn space_time(nodes: usize, horizon: f64, time_nodes: usize) -> SpaceTimeGrid {
    let space = SpatialGrid::uniform(unit_domain(), nodes).expect("valid grid");
    SpaceTimeGrid::from_horizon(space, horizon, time_nodes).expect("valid grid")
}

/// Rough scalar data on a square grid: Gaussian noise plus sparse spikes.
pub fn rough_slice(nodes_per_axis: usize, seed: u64) -> FieldSlice {
    let dom = BoundedDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).expect("valid box");
    let grid = SpatialGrid::uniform(dom, nodes_per_axis).expect("valid grid");
    let mut noise = StreamSpec::new(seed, 0).noise();
    let vals = (0..grid.len())
        .map(|_| noise.normal() + if noise.uniform() < 0.05 { 10.0 } else { 0.0 })
        .collect();
    FieldSlice::new(grid, 1, vals).expect("matching length")
}
