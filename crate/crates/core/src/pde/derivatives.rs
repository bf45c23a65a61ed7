use crate::geometry::{GridFunction, SpatialGrid};

/// First difference along `axis` at `node`: central inside, one-sided
/// second order on the faces.
#[inline]
fn d1(grid: &SpatialGrid, vals: &[f64], comps: usize, c: usize, node: usize, axis: usize) -> f64 {
    let s = grid.strides()[axis];
    let n = grid.nodes()[axis];
    let h = grid.spacing()[axis];
    let i = (node / s) % n;
    let v = |k: usize| vals[k * comps + c];
    if i == 0 {
        (-3.0 * v(node) + 4.0 * v(node + s) - v(node + 2 * s)) / (2.0 * h)
    } else if i + 1 == n {
        (3.0 * v(node) - 4.0 * v(node - s) + v(node - 2 * s)) / (2.0 * h)
    } else {
        (v(node + s) - v(node - s)) / (2.0 * h)
    }
}

/// Second difference along `axis`; four-point one-sided on the faces when
/// the axis has at least four nodes.
#[inline]
fn d2(grid: &SpatialGrid, vals: &[f64], node: usize, axis: usize) -> f64 {
    let s = grid.strides()[axis];
    let n = grid.nodes()[axis];
    let h = grid.spacing()[axis];
    let h2 = h * h;
    let i = (node / s) % n;
    let v = |k: usize| vals[k];
    if i > 0 && i + 1 < n {
        (v(node + s) - 2.0 * v(node) + v(node - s)) / h2
    } else if n >= 4 {
        if i == 0 {
            (2.0 * v(node) - 5.0 * v(node + s) + 4.0 * v(node + 2 * s) - v(node + 3 * s)) / h2
        } else {
            (2.0 * v(node) - 5.0 * v(node - s) + 4.0 * v(node - 2 * s) - v(node - 3 * s)) / h2
        }
    } else if i == 0 {
        (v(node) - 2.0 * v(node + s) + v(node + 2 * s)) / h2
    } else {
        (v(node) - 2.0 * v(node - s) + v(node - 2 * s)) / h2
    }
}

/// Gradient of component `c` of one time level, `d` values per node.
pub fn level_gradient(grid: &SpatialGrid, vals: &[f64], comps: usize, c: usize) -> Vec<f64> {
    let d = grid.dim();
    let mut out = vec![0.0; grid.len() * d];
    for node in 0..grid.len() {
        for axis in 0..d {
            out[node * d + axis] = d1(grid, vals, comps, c, node, axis);
        }
    }
    out
}

/// Gradient (`d` components) and Hessian (`d * d` components, row-major)
/// of a scalar grid function at every level. Mixed derivatives apply the
/// first difference twice; pure second derivatives use the three-point
/// stencil, so both are exact for quadratics inside the box.
pub fn gradient_hessian(u: &GridFunction) -> (GridFunction, GridFunction) {
    assert_eq!(u.components(), 1, "gradient_hessian expects a scalar grid function");
    let grid = u.grid().clone();
    let space = grid.space().clone();
    let d = space.dim();
    let n = space.len();
    let mut grad = Vec::with_capacity(grid.time_nodes() * n * d);
    let mut hess = Vec::with_capacity(grid.time_nodes() * n * d * d);
    let mut level_hess = vec![0.0; n * d * d];
    for k in 0..grid.time_nodes() {
        let vals = u.level(k);
        let g = level_gradient(&space, vals, 1, 0);
        for node in 0..n {
            for i in 0..d {
                level_hess[node * d * d + i * d + i] = d2(&space, vals, node, i);
                for j in i + 1..d {
                    let m = d1(&space, &g, d, i, node, j);
                    level_hess[node * d * d + i * d + j] = m;
                    level_hess[node * d * d + j * d + i] = m;
                }
            }
        }
        grad.extend_from_slice(&g);
        hess.extend_from_slice(&level_hess);
    }
    (
        GridFunction::from_values(grid.clone(), d, grad).expect("differences of finite values"),
        GridFunction::from_values(grid, d * d, hess).expect("differences of finite values"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_field, BoundedDomain, SpaceTimeGrid};

    fn grid2(n: usize) -> SpaceTimeGrid {
        let dom = BoundedDomain::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        SpaceTimeGrid::from_horizon(SpatialGrid::uniform(dom, n).unwrap(), 1.0, 2).unwrap()
    }

    #[test]
    fn linear_gradient_exact_everywhere() {
        let g = grid2(9);
        let u = sample_field(|_, x| 2.0 * x[0] - 3.0 * x[1] + 1.0, &g).unwrap();
        let (grad, hess) = gradient_hessian(&u);
        for n in 0..g.space().len() {
            assert!((grad.at(0, n, 0) - 2.0).abs() < 1e-12);
            assert!((grad.at(0, n, 1) + 3.0).abs() < 1e-12);
            for c in 0..4 {
                assert!(hess.at(1, n, c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quadratic_hessian_exact() {
        let g = grid2(11);
        let u = sample_field(|_, x| x[0] * x[0] + 3.0 * x[0] * x[1] - 0.5 * x[1] * x[1], &g).unwrap();
        let (_, hess) = gradient_hessian(&u);
        for n in 0..g.space().len() {
            let want = [2.0, 3.0, 3.0, -1.0];
            for (c, w) in want.iter().enumerate() {
                assert!((hess.at(0, n, c) - w).abs() < 1e-8, "node {n} comp {c}");
            }
        }
    }

    #[test]
    fn sine_gradient_within_taylor_bound() {
        let dom = BoundedDomain::interval(0.0, 3.0).unwrap();
        let space = SpatialGrid::uniform(dom, 61).unwrap();
        let h = space.spacing()[0];
        let g = SpaceTimeGrid::from_horizon(space, 1.0, 2).unwrap();
        let u = sample_field(|_, x| x[0].sin(), &g).unwrap();
        let (grad, _) = gradient_hessian(&u);
        let mut x = [0.0];
        for n in 1..60 {
            g.space().node_point(n, &mut x);
            assert!((grad.at(0, n, 0) - x[0].cos()).abs() <= h * h / 6.0 * (1.0 + 1e-9));
        }
        // one-sided faces stay second order
        assert!((grad.at(0, 0, 0) - 1.0).abs() <= h * h);
    }
}
