use crate::error::{Error, Result};
use crate::geometry::BoundedDomain;

/// Uniform node lattice on the closed box of a [`BoundedDomain`].
///
/// Nodes are stored row-major: the last axis varies fastest, so flat index
/// order is lexicographic order of multi-indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    domain: BoundedDomain,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl SpatialGrid {
    pub fn new(domain: BoundedDomain, nodes: Vec<usize>) -> Result<Self> {
        if nodes.len() != domain.dim() {
            return Err(Error::InvalidGrid(format!(
                "{} node counts for a {}-dimensional domain",
                nodes.len(),
                domain.dim()
            )));
        }
        if let Some(n) = nodes.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidGrid(format!(
                "each axis needs at least 3 nodes, got {n}"
            )));
        }
        let spacing = nodes
            .iter()
            .enumerate()
            .map(|(i, &n)| domain.width(i) / (n - 1) as f64)
            .collect();
        let mut strides = vec![1; nodes.len()];
        for i in (0..nodes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * nodes[i + 1];
        }
        Ok(Self {
            domain,
            nodes,
            spacing,
            strides,
        })
    }

    /// Same node count on every axis.
    pub fn uniform(domain: BoundedDomain, nodes_per_axis: usize) -> Result<Self> {
        let d = domain.dim();
        Self::new(domain, vec![nodes_per_axis; d])
    }

    pub fn domain(&self) -> &BoundedDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Coordinate of node `i` on `axis`; the last node sits exactly on `hi`.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.nodes[axis] {
            self.domain.hi()[axis]
        } else {
            self.domain.lo()[axis] + i as f64 * self.spacing[axis]
        }
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for (axis, s) in self.strides.iter().enumerate() {
            out[axis] = flat / s;
            flat %= s;
        }
    }

    pub fn node_point(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for (axis, s) in self.strides.iter().enumerate() {
            let i = rem / s;
            rem %= s;
            out[axis] = self.coord(axis, i);
        }
    }

    /// True if the node lies on the boundary of the box.
    pub fn is_boundary(&self, flat: usize) -> bool {
        let mut rem = flat;
        for (axis, s) in self.strides.iter().enumerate() {
            let i = rem / s;
            rem %= s;
            if i == 0 || i + 1 == self.nodes[axis] {
                return true;
            }
        }
        false
    }
}

/// Space grid times a uniform time grid on `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    space: SpatialGrid,
    t_start: f64,
    t_end: f64,
    time_nodes: usize,
    dt: f64,
}

impl SpaceTimeGrid {
    pub fn new(space: SpatialGrid, t_start: f64, t_end: f64, time_nodes: usize) -> Result<Self> {
        if time_nodes < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 time nodes, got {time_nodes}"
            )));
        }
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(Error::InvalidGrid(format!(
                "need finite t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        let dt = (t_end - t_start) / (time_nodes - 1) as f64;
        Ok(Self {
            space,
            t_start,
            t_end,
            time_nodes,
            dt,
        })
    }

    /// Grid on `[0, horizon]`.
    pub fn from_horizon(space: SpatialGrid, horizon: f64, time_nodes: usize) -> Result<Self> {
        Self::new(space, 0.0, horizon, time_nodes)
    }

    pub fn space(&self) -> &SpatialGrid {
        &self.space
    }

    pub fn domain(&self) -> &BoundedDomain {
        self.space.domain()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn time_nodes(&self) -> usize {
        self.time_nodes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time of level `k`; the last level is exactly `t_end`.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.time_nodes {
            self.t_end
        } else {
            self.t_start + k as f64 * self.dt
        }
    }

    /// Index of the level closest to `t`.
    pub fn nearest_level(&self, t: f64) -> usize {
        let k = ((t - self.t_start) / self.dt).round();
        (k.max(0.0) as usize).min(self.time_nodes - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinates_increase_and_hit_bounds() {
        let g = SpatialGrid::uniform(BoundedDomain::interval(-1.0, 2.0).unwrap(), 7).unwrap();
        assert_eq!(g.coord(0, 0), -1.0);
        assert_eq!(g.coord(0, 6), 2.0);
        for i in 0..6 {
            assert!(g.coord(0, i) < g.coord(0, i + 1));
        }
        assert!((g.spacing()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn flat_and_multi_indices_round_trip() {
        let d = BoundedDomain::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let g = SpatialGrid::new(d, vec![4, 5]).unwrap();
        let mut m = [0usize; 2];
        for flat in 0..g.len() {
            g.multi_index(flat, &mut m);
            assert_eq!(g.flat_index(&m), flat);
        }
        assert!(g.is_boundary(0));
        assert!(!g.is_boundary(g.flat_index(&[1, 1])));
        assert!(g.is_boundary(g.flat_index(&[3, 2])));
    }

    #[test]
    fn rejects_degenerate_grids() {
        let d = BoundedDomain::interval(0.0, 1.0).unwrap();
        assert!(SpatialGrid::uniform(d.clone(), 2).is_err());
        let s = SpatialGrid::uniform(d, 3).unwrap();
        assert!(SpaceTimeGrid::from_horizon(s.clone(), 1.0, 1).is_err());
        assert!(SpaceTimeGrid::from_horizon(s, 0.0, 5).is_err());
    }
}
