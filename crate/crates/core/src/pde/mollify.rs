use log::warn;

use crate::error::{Error, Result};
use crate::geometry::GridFunction;

/// Standard bump `exp(-1 / (1 - r^2))` on `|r| < 1`.
fn bump(r: f64) -> f64 {
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Weights of the 1-D kernel of radius `radius` on a lattice of spacing `h`;
/// index `reach + j` holds offset `j`.
fn kernel(radius: f64, h: f64) -> Vec<f64> {
    let reach = (radius / h).ceil() as usize;
    (0..=2 * reach)
        .map(|i| bump((i as f64 - reach as f64) * h / radius))
        .collect()
}

/// Convolve along one axis with `w`, renormalizing where the kernel is cut
/// by the box.
fn convolve_axis(vals: &[f64], len: usize, stride: usize, outer: usize, w: &[f64], comps: usize) -> Vec<f64> {
    let reach = (w.len() / 2) as isize;
    let mut out = vec![0.0; vals.len()];
    let block = len * stride;
    for base in (0..outer).map(|o| (o / stride) * block + o % stride) {
        for i in 0..len as isize {
            for c in 0..comps {
                let (mut num, mut den) = (0.0, 0.0);
                for j in -reach..=reach {
                    let k = i + j;
                    if k < 0 || k >= len as isize {
                        continue;
                    }
                    let wt = w[(j + reach) as usize];
                    num += wt * vals[(base + k as usize * stride) * comps + c];
                    den += wt;
                }
                out[(base + i as usize * stride) * comps + c] = num / den;
            }
        }
    }
    out
}

/// Space-time convolution with the product bump of radius `span / n` in time
/// and `diam(D) / n` in space, renormalized on the truncated support near
/// the faces of the box and the ends of the time interval.
///
/// If the spatial radius falls below the grid spacing the input is returned
/// unchanged (with a warning); a time radius below the time step leaves the
/// time direction untouched.
pub fn mollify(f: &GridFunction, n: usize) -> Result<GridFunction> {
    if n == 0 {
        return Err(Error::InvalidParameter("mollification level must be at least 1".into()));
    }
    let grid = f.grid();
    let space = grid.space();
    let rx = space.domain().diameter() / n as f64;
    let rt = (grid.t_end() - grid.t_start()) / n as f64;
    let min_h = space.spacing().iter().copied().fold(f64::INFINITY, f64::min);
    if rx < min_h {
        warn!("mollifier radius {rx} is below the grid spacing {min_h}; input returned unchanged");
        return Ok(f.clone());
    }
    let comps = f.components();
    let n_space = space.len();
    let n_t = grid.time_nodes();
    let total = n_t * n_space;
    let mut vals = f.values().to_vec();
    // Axes of the flattened [time][space] array: time has stride n_space.
    for axis in 0..space.dim() {
        let w = kernel(rx, space.spacing()[axis]);
        let len = space.nodes()[axis];
        let stride = space.strides()[axis];
        vals = convolve_axis(&vals, len, stride, total / len, &w, comps);
    }
    if rt >= grid.dt() {
        let w = kernel(rt, grid.dt());
        vals = convolve_axis(&vals, n_t, n_space, n_space, &w, comps);
    }
    GridFunction::from_values(grid.clone(), comps, vals)
}
