use crate::error::{Error, Result};
use crate::geometry::{SpaceTimeGrid, SpatialGrid};

/// Locate `x` on `axis`: returns the cell index and the weight of its upper
/// node. Node coordinates map to weight exactly 0 or 1.
#[inline]
pub(crate) fn locate(grid: &SpatialGrid, axis: usize, x: f64) -> Option<(usize, f64)> {
    let lo = grid.domain().lo()[axis];
    let hi = grid.domain().hi()[axis];
    let tol = 1e-9 * (hi - lo);
    if !(x >= lo - tol && x <= hi + tol) {
        return None;
    }
    let x = x.clamp(lo, hi);
    let n = grid.nodes()[axis];
    let h = grid.spacing()[axis];
    let mut i = (((x - lo) / h).floor().max(0.0) as usize).min(n - 2);
    if x < grid.coord(axis, i) && i > 0 {
        i -= 1;
    } else if x > grid.coord(axis, i + 1) && i + 2 < n {
        i += 1;
    }
    let a = grid.coord(axis, i);
    let b = grid.coord(axis, i + 1);
    let w = if x == a {
        0.0
    } else if x == b {
        1.0
    } else {
        ((x - a) / (b - a)).clamp(0.0, 1.0)
    };
    Some((i, w))
}

/// Values on the nodes of a single spatial grid (one time level).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSlice {
    grid: SpatialGrid,
    components: usize,
    values: Vec<f64>,
}

impl FieldSlice {
    pub fn new(grid: SpatialGrid, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 || values.len() != grid.len() * components {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len() * components,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: values[i],
                location: format!("node {} component {}", i / components, i % components),
            });
        }
        Ok(Self {
            grid,
            components,
            values,
        })
    }

    /// Scalar slice from a function of the node coordinates.
    pub fn from_fn(grid: SpatialGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|n| {
                grid.node_point(n, &mut x);
                f(&x)
            })
            .collect();
        Self::new(grid, 1, values)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, node: usize, c: usize) -> f64 {
        self.values[node * self.components + c]
    }

    /// Node values of component `c`.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(c)
            .step_by(self.components)
            .copied()
            .collect()
    }

    /// Multilinear interpolation; errors outside the closed box.
    pub fn interpolate(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        interpolate_levels(&self.grid, self.components, &self.values, None, x, out)
            .ok_or_else(|| Error::OutOfGrid { t: f64::NAN, x: x.to_vec() })
    }
}

/// Values on the nodes of a [`SpaceTimeGrid`], `components` per node.
///
/// Layout is `[time level][spatial node][component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: SpaceTimeGrid,
    components: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: SpaceTimeGrid, components: usize) -> Self {
        assert!(components > 0);
        let n = grid.time_nodes() * grid.space().len() * components;
        Self {
            grid,
            components,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(grid: SpaceTimeGrid, components: usize, values: Vec<f64>) -> Result<Self> {
        let expected = grid.time_nodes() * grid.space().len() * components;
        if components == 0 || values.len() != expected {
            return Err(Error::InvalidGrid(format!(
                "expected {expected} values, got {}",
                values.len()
            )));
        }
        let per_level = grid.space().len() * components;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: values[i],
                location: format!(
                    "time level {}, node {}, component {}",
                    i / per_level,
                    (i % per_level) / components,
                    i % components
                ),
            });
        }
        Ok(Self {
            grid,
            components,
            values,
        })
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn level_len(&self) -> usize {
        self.grid.space().len() * self.components
    }

    #[inline]
    pub fn at(&self, level: usize, node: usize, c: usize) -> f64 {
        self.values[(level * self.grid.space().len() + node) * self.components + c]
    }

    /// Overwrite one value; non-finite values are rejected.
    pub fn set(&mut self, level: usize, node: usize, c: usize, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                value: v,
                location: format!("time level {level}, node {node}, component {c}"),
            });
        }
        let n = self.grid.space().len();
        self.values[(level * n + node) * self.components + c] = v;
        Ok(())
    }

    /// All values of one time level.
    pub fn level(&self, k: usize) -> &[f64] {
        let len = self.level_len();
        &self.values[k * len..(k + 1) * len]
    }

    /// Copy of one time level.
    pub fn slice(&self, k: usize) -> FieldSlice {
        FieldSlice {
            grid: self.grid.space().clone(),
            components: self.components,
            values: self.level(k).to_vec(),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Multilinear in space, linear in time; exact at nodes.
    pub fn interpolate(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let g = &self.grid;
        let span = g.t_end() - g.t_start();
        let tol = 1e-9 * span;
        if !(t >= g.t_start() - tol && t <= g.t_end() + tol) {
            return Err(Error::OutOfGrid { t, x: x.to_vec() });
        }
        let t = t.clamp(g.t_start(), g.t_end());
        let n_t = g.time_nodes();
        let mut k = (((t - g.t_start()) / g.dt()).floor().max(0.0) as usize).min(n_t - 2);
        if t < g.time(k) && k > 0 {
            k -= 1;
        } else if t > g.time(k + 1) && k + 2 < n_t {
            k += 1;
        }
        let (a, b) = (g.time(k), g.time(k + 1));
        let wt = if t == a {
            0.0
        } else if t == b {
            1.0
        } else {
            ((t - a) / (b - a)).clamp(0.0, 1.0)
        };
        let len = self.level_len();
        let lower = &self.values[k * len..(k + 1) * len];
        let upper = &self.values[(k + 1) * len..(k + 2) * len];
        interpolate_levels(
            g.space(),
            self.components,
            lower,
            Some((upper, wt)),
            x,
            out,
        )
        .ok_or_else(|| Error::OutOfGrid { t, x: x.to_vec() })
    }

    pub fn interpolate_scalar(&self, t: f64, x: &[f64]) -> Result<f64> {
        let mut out = [0.0];
        self.interpolate(t, x, &mut out)?;
        Ok(out[0])
    }

    pub fn holder_seminorm_estimate(&self, alpha: f64, level: usize) -> Result<f64> {
        crate::geometry::holder_seminorm_estimate(&self.slice(level), alpha)
    }
}

fn interpolate_levels(
    grid: &SpatialGrid,
    comps: usize,
    lower: &[f64],
    upper: Option<(&[f64], f64)>,
    x: &[f64],
    out: &mut [f64],
) -> Option<()> {
    let d = grid.dim();
    let blend = |idx: usize| -> f64 {
        match upper {
            Some((up, wt)) if wt != 0.0 => {
                if wt == 1.0 {
                    up[idx]
                } else {
                    (1.0 - wt) * lower[idx] + wt * up[idx]
                }
            }
            _ => lower[idx],
        }
    };
    if d == 1 {
        let (i, w) = locate(grid, 0, x[0])?;
        for (c, o) in out.iter_mut().enumerate().take(comps) {
            let v0 = blend(i * comps + c);
            *o = if w == 0.0 {
                v0
            } else {
                let v1 = blend((i + 1) * comps + c);
                if w == 1.0 {
                    v1
                } else {
                    (1.0 - w) * v0 + w * v1
                }
            };
        }
        return Some(());
    }
    let mut cell = [0usize; crate::geometry::MAX_DIM];
    let mut wts = [0.0f64; crate::geometry::MAX_DIM];
    for axis in 0..d {
        let (i, w) = locate(grid, axis, x[axis])?;
        cell[axis] = i;
        wts[axis] = w;
    }
    out[..comps].fill(0.0);
    let strides = grid.strides();
    for mask in 0..(1usize << d) {
        let mut weight = 1.0;
        let mut flat = 0;
        for axis in 0..d {
            let up = (mask >> axis) & 1 == 1;
            weight *= if up { wts[axis] } else { 1.0 - wts[axis] };
            flat += (cell[axis] + up as usize) * strides[axis];
        }
        if weight == 0.0 {
            continue;
        }
        for (c, o) in out.iter_mut().enumerate().take(comps) {
            *o += weight * blend(flat * comps + c);
        }
    }
    Some(())
}

/// Evaluate a scalar map at every node.
pub fn sample_field(
    f: impl Fn(f64, &[f64]) -> f64,
    grid: &SpaceTimeGrid,
) -> Result<GridFunction> {
    sample_vector_field(|t, x, out| out[0] = f(t, x), 1, grid)
}

/// Evaluate a `components`-valued map at every node.
pub fn sample_vector_field(
    f: impl Fn(f64, &[f64], &mut [f64]),
    components: usize,
    grid: &SpaceTimeGrid,
) -> Result<GridFunction> {
    let space = grid.space();
    let mut x = vec![0.0; space.dim()];
    let mut values = Vec::with_capacity(grid.time_nodes() * space.len() * components);
    let mut buf = vec![0.0; components];
    for k in 0..grid.time_nodes() {
        let t = grid.time(k);
        for n in 0..space.len() {
            space.node_point(n, &mut x);
            f(t, &x, &mut buf);
            for (c, v) in buf.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        value: *v,
                        location: format!("t={t}, x={x:?}, component {c}"),
                    });
                }
            }
            values.extend_from_slice(&buf);
        }
    }
    GridFunction::from_values(grid.clone(), components, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundedDomain;

    fn grid_1d(n: usize) -> SpaceTimeGrid {
        let s = SpatialGrid::uniform(BoundedDomain::interval(0.0, 1.0).unwrap(), n).unwrap();
        SpaceTimeGrid::from_horizon(s, 1.0, 5).unwrap()
    }

    #[test]
    fn node_queries_return_stored_values() {
        let g = grid_1d(11);
        let f = sample_field(|t, x| (7.0 * x[0]).sin() + t * t, &g).unwrap();
        let mut x = [0.0];
        for k in 0..g.time_nodes() {
            for n in 0..g.space().len() {
                g.space().node_point(n, &mut x);
                let v = f.interpolate_scalar(g.time(k), &x).unwrap();
                assert_eq!(v.to_bits(), f.at(k, n, 0).to_bits());
            }
        }
    }

    #[test]
    fn affine_functions_are_reproduced() {
        let d = BoundedDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let s = SpatialGrid::new(d, vec![5, 7]).unwrap();
        let g = SpaceTimeGrid::from_horizon(s, 2.0, 4).unwrap();
        let f = sample_field(|t, x| 1.0 + 2.0 * x[0] - 3.0 * x[1] + 0.5 * t, &g).unwrap();
        for &(t, a, b) in &[(0.3, 0.1, 1.7), (1.99, -0.95, 0.01), (1.0, 0.77, 1.23)] {
            let v = f.interpolate_scalar(t, &[a, b]).unwrap();
            assert!((v - (1.0 + 2.0 * a - 3.0 * b + 0.5 * t)).abs() < 1e-13);
        }
    }

    #[test]
    fn quadratic_midpoint_error_bound() {
        let n = 21;
        let g = grid_1d(n);
        let h = g.space().spacing()[0];
        let f = sample_field(|_, x| x[0] * x[0], &g).unwrap();
        for i in 0..n - 1 {
            let xm = (i as f64 + 0.5) * h;
            let err = (f.interpolate_scalar(0.5, &[xm]).unwrap() - xm * xm).abs();
            assert!(err <= h * h / 4.0 + 1e-15, "err {err} at {xm}");
        }
    }

    #[test]
    fn out_of_box_is_an_error() {
        let g = grid_1d(5);
        let f = GridFunction::zeros(g, 1);
        assert!(matches!(f.interpolate_scalar(0.5, &[1.1]), Err(Error::OutOfGrid { .. })));
        assert!(f.interpolate_scalar(1.5, &[0.5]).is_err());
        assert!(f.interpolate_scalar(0.5, &[1.0 + 1e-12]).is_ok());
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        let g = grid_1d(5);
        let err = sample_field(|_, x| 1.0 / (x[0] - 0.5), &g).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn constant_and_linear_fields_sample_exactly() {
        let g = grid_1d(9);
        let c = sample_field(|_, _| 3.5, &g).unwrap();
        assert!(c.values().iter().all(|&v| v == 3.5));
        let l = sample_field(|_, x| x[0], &g).unwrap();
        for n in 0..9 {
            assert_eq!(l.at(2, n, 0), g.space().coord(0, n));
        }
    }
}
