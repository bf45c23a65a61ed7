//! Grid functionals: mixed `L^q_p` norms, sampled Hoelder seminorms and the
//! ellipticity scan of `sigma sigma^T`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CoefficientField, FieldSlice, GridFunction, SpaceTimeGrid, MAX_DIM};
use crate::rng::StreamSpec;

fn check_exponent(name: &str, e: f64) -> Result<()> {
    if e >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [1, inf], got {e}")))
    }
}

/// Mixed norm `(int_0^T (int_D |f|^p dx)^{q/p} dt)^{1/q}`, time outer,
/// space inner, by composite midpoint quadrature. Each space-time cell
/// contributes the mean of `|f|` over its corner nodes; an infinite exponent
/// takes the grid supremum instead.
pub fn lqp_norm(f: &GridFunction, component: usize, p: f64, q: f64) -> Result<f64> {
    check_exponent("p", p)?;
    check_exponent("q", q)?;
    if component >= f.components() {
        return Err(Error::InvalidParameter(format!(
            "component {component} out of range ({} components)",
            f.components()
        )));
    }
    let grid = f.grid();
    let space = grid.space();
    let n_space = space.len();
    if n_space == 0 || grid.time_nodes() < 2 {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    for k in 0..grid.time_nodes() {
        for n in 0..n_space {
            let v = f.at(k, n, component);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    value: v,
                    location: format!("time level {k}, node {n}"),
                });
            }
        }
    }
    let corners = cell_corner_offsets(space);
    let cells = lower_corners(space);
    let vol = space.cell_volume();
    let scale = 1.0 / (2 * corners.len()) as f64;
    let inner: Vec<f64> = (0..grid.time_nodes() - 1)
        .map(|k| {
            if p.is_infinite() {
                (0..n_space)
                    .map(|n| f.at(k, n, component).abs().max(f.at(k + 1, n, component).abs()))
                    .fold(0.0, f64::max)
            } else {
                let mut acc = 0.0;
                for &base in &cells {
                    let mut s = 0.0;
                    for &off in &corners {
                        s += f.at(k, base + off, component).abs()
                            + f.at(k + 1, base + off, component).abs();
                    }
                    acc += vol * (s * scale).powf(p);
                }
                acc.powf(1.0 / p)
            }
        })
        .collect();
    Ok(outer_norm(&inner, grid.dt(), q))
}

/// As [`lqp_norm`] for a function given in closed form: each cell contributes
/// `|f|` at its space-time midpoint.
pub fn lqp_norm_fn(
    f: impl Fn(f64, &[f64]) -> f64,
    grid: &SpaceTimeGrid,
    p: f64,
    q: f64,
) -> Result<f64> {
    check_exponent("p", p)?;
    check_exponent("q", q)?;
    let space = grid.space();
    let d = space.dim();
    let cells = lower_corners(space);
    let vol = space.cell_volume();
    let h = space.spacing();
    let mut x = vec![0.0; d];
    let mut inner = Vec::with_capacity(grid.time_nodes() - 1);
    for k in 0..grid.time_nodes() - 1 {
        let t = 0.5 * (grid.time(k) + grid.time(k + 1));
        let mut acc: f64 = 0.0;
        for &base in &cells {
            space.node_point(base, &mut x);
            for (xi, hi) in x.iter_mut().zip(h) {
                *xi += 0.5 * hi;
            }
            let v = f(t, &x);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    value: v,
                    location: format!("t={t}, x={x:?}"),
                });
            }
            if p.is_infinite() {
                acc = acc.max(v.abs());
            } else {
                acc += vol * v.abs().powf(p);
            }
        }
        inner.push(if p.is_infinite() { acc } else { acc.powf(1.0 / p) });
    }
    Ok(outer_norm(&inner, grid.dt(), q))
}

fn outer_norm(inner: &[f64], dt: f64, q: f64) -> f64 {
    if q.is_infinite() {
        inner.iter().copied().fold(0.0, f64::max)
    } else {
        inner.iter().map(|v| dt * v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// Flat offsets of the 2^d corners of a cell relative to its lower corner.
fn cell_corner_offsets(space: &crate::geometry::SpatialGrid) -> Vec<usize> {
    let d = space.dim();
    (0..1usize << d)
        .map(|mask| {
            (0..d)
                .map(|a| ((mask >> a) & 1) * space.strides()[a])
                .sum()
        })
        .collect()
}

/// Flat indices of all cell lower corners, in lexicographic order.
fn lower_corners(space: &crate::geometry::SpatialGrid) -> Vec<usize> {
    let d = space.dim();
    let mut m = vec![0usize; d];
    (0..space.len())
        .filter(|&n| {
            space.multi_index(n, &mut m);
            m.iter().zip(space.nodes()).all(|(i, n)| i + 1 < *n)
        })
        .collect()
}

/// Number of nodes up to which every pair is scanned.
pub const HOLDER_FULL_SCAN_NODES: usize = 10_000;
const HOLDER_RANDOM_PAIRS: usize = 1_000_000;

/// Lower estimate of the Hoelder-`alpha` seminorm,
/// `max |f(x) - f(y)| / |x - y|^alpha` over node pairs. Every pair is
/// scanned up to [`HOLDER_FULL_SCAN_NODES`] nodes, otherwise a fixed-seed
/// random sample of pairs.
pub fn holder_seminorm_estimate(f: &FieldSlice, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let grid = f.grid();
    let n = grid.len();
    if n < 2 {
        return Err(Error::InvalidGrid("need at least 2 nodes".into()));
    }
    let d = grid.dim();
    let comps = f.components();
    let points: Vec<f64> = {
        let mut pts = vec![0.0; n * d];
        for i in 0..n {
            grid.node_point(i, &mut pts[i * d..(i + 1) * d]);
        }
        pts
    };
    let vals = f.values();
    let ratio = |i: usize, j: usize| -> f64 {
        let mut dx2 = 0.0;
        for a in 0..d {
            let v = points[i * d + a] - points[j * d + a];
            dx2 += v * v;
        }
        let mut df2 = 0.0;
        for c in 0..comps {
            let v = vals[i * comps + c] - vals[j * comps + c];
            df2 += v * v;
        }
        if df2 == 0.0 {
            0.0
        } else {
            (df2 / dx2.powf(alpha)).sqrt()
        }
    };
    let mut best: f64 = 0.0;
    if n <= HOLDER_FULL_SCAN_NODES {
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(ratio(i, j));
            }
        }
    } else {
        let mut noise = StreamSpec::new(0x4f1d_e5ee, 0).noise();
        for _ in 0..HOLDER_RANDOM_PAIRS {
            let i = noise.index_below(n);
            let j = noise.index_below(n);
            if i != j {
                best = best.max(ratio(i, j));
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub pass: bool,
    pub kappa: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Eigenvalue farthest (in ratio) from `[1/kappa, kappa]`.
    pub worst_eigenvalue: f64,
    pub worst_time: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
}

/// Eigenvalues of a symmetric `d x d` row-major matrix, ascending.
pub(crate) fn symmetric_eigenvalues(a: &[f64], d: usize) -> Vec<f64> {
    match d {
        1 => vec![a[0]],
        2 => {
            let (p, r, s) = (a[0], a[1], a[3]);
            let m = 0.5 * (p + s);
            let disc = (0.25 * (p - s) * (p - s) + r * r).sqrt();
            vec![m - disc, m + disc]
        }
        _ => {
            let m = DMatrix::from_row_slice(d, d, a);
            let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            ev
        }
    }
}

/// Scan `samples` evenly spaced space-time nodes for the eigenvalue range of
/// `sigma sigma^T` and compare against the field's `kappa`.
pub fn ellipticity_check(
    field: &CoefficientField,
    grid: &SpaceTimeGrid,
    samples: usize,
) -> Result<EllipticityReport> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let d = field.dim();
    if d != grid.dim() {
        return Err(Error::InvalidParameter(format!(
            "field dimension {d} does not match grid dimension {}",
            grid.dim()
        )));
    }
    let kappa = field.regularity().kappa;
    let space = grid.space();
    let total = grid.time_nodes() * space.len();
    let picks: Vec<usize> = if samples >= total {
        (0..total).collect()
    } else if samples == 1 {
        vec![0]
    } else {
        (0..samples)
            .map(|j| ((j as u128 * (total - 1) as u128) / (samples - 1) as u128) as usize)
            .collect()
    };
    let mut sigma = [0.0; MAX_DIM * MAX_DIM];
    let mut a = [0.0; MAX_DIM * MAX_DIM];
    let mut x = vec![0.0; d];
    let score = |lam: f64| -> f64 {
        if lam <= 0.0 {
            f64::INFINITY
        } else {
            (lam / kappa).max(1.0 / (kappa * lam))
        }
    };
    let mut report = EllipticityReport {
        pass: true,
        kappa,
        min_eigenvalue: f64::INFINITY,
        max_eigenvalue: f64::NEG_INFINITY,
        worst_eigenvalue: f64::NAN,
        worst_time: f64::NAN,
        worst_point: vec![],
        samples: picks.len(),
    };
    let mut worst_score = f64::NEG_INFINITY;
    for &idx in &picks {
        let (k, n) = (idx / space.len(), idx % space.len());
        let t = grid.time(k);
        space.node_point(n, &mut x);
        field.covariance(t, &x, &mut sigma[..d * d], &mut a[..d * d]);
        let scale = a[..d * d].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                let asym = (a[i * d + j] - a[j * d + i]).abs();
                if asym > 1e-12 * scale.max(1.0) {
                    return Err(Error::AsymmetricDiffusion {
                        location: format!("t={t}, x={x:?}"),
                        asymmetry: asym,
                    });
                }
            }
        }
        if let Some(v) = a[..d * d].iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: *v,
                location: format!("sigma sigma^T at t={t}, x={x:?}"),
            });
        }
        for lam in symmetric_eigenvalues(&a[..d * d], d) {
            report.min_eigenvalue = report.min_eigenvalue.min(lam);
            report.max_eigenvalue = report.max_eigenvalue.max(lam);
            if lam < (1.0 / kappa) * (1.0 - 1e-12) || lam > kappa * (1.0 + 1e-12) {
                report.pass = false;
            }
            let s = score(lam);
            if s > worst_score {
                worst_score = s;
                report.worst_eigenvalue = lam;
                report.worst_time = t;
                report.worst_point = x.clone();
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_field, BoundedDomain, Regularity, SpatialGrid};
    use std::sync::Arc;

    fn unit_grid(nx: usize, nt: usize) -> SpaceTimeGrid {
        let s = SpatialGrid::uniform(BoundedDomain::interval(0.0, 1.0).unwrap(), nx).unwrap();
        SpaceTimeGrid::from_horizon(s, 1.0, nt).unwrap()
    }

    #[test]
    fn unit_mass_on_unit_cylinder() {
        let g = unit_grid(33, 17);
        let one = sample_field(|_, _| 1.0, &g).unwrap();
        for &(p, q) in &[(1.0, 1.0), (2.0, 3.0), (4.0, 1.5), (f64::INFINITY, 2.0), (2.0, f64::INFINITY)] {
            assert!((lqp_norm(&one, 0, p, q).unwrap() - 1.0).abs() < 1e-12, "p={p} q={q}");
            assert!((lqp_norm_fn(|_, _| 1.0, &g, p, q).unwrap() - 1.0).abs() < 1e-12);
        }
        let c = sample_field(|_, _| -2.5, &g).unwrap();
        assert!((lqp_norm(&c, 0, 3.0, 2.0).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn linear_function_l2() {
        // exact value (1/3)^{1/2}; midpoint rule misses h^2/12 inside the root
        let n = 201;
        let g = unit_grid(n, 3);
        let f = sample_field(|_, x| x[0], &g).unwrap();
        let h: f64 = 1.0 / (n - 1) as f64;
        let expected = (1.0 / 3.0 - h * h / 12.0f64).sqrt();
        let got = lqp_norm(&f, 0, 2.0, 2.0).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!((got - 0.577_35).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_exponents_and_components() {
        let g = unit_grid(5, 3);
        let f = sample_field(|_, _| 1.0, &g).unwrap();
        assert!(lqp_norm(&f, 0, 0.5, 2.0).is_err());
        assert!(lqp_norm(&f, 1, 2.0, 2.0).is_err());
    }

    #[test]
    fn holder_of_constant_linear_and_sqrt() {
        let s = SpatialGrid::uniform(BoundedDomain::interval(0.0, 1.0).unwrap(), 51).unwrap();
        let c = FieldSlice::from_fn(s.clone(), |_| 4.0).unwrap();
        assert_eq!(holder_seminorm_estimate(&c, 0.5).unwrap(), 0.0);
        let l = FieldSlice::from_fn(s, |x| x[0]).unwrap();
        assert!((holder_seminorm_estimate(&l, 1.0).unwrap() - 1.0).abs() < 1e-12);

        let s = SpatialGrid::uniform(BoundedDomain::interval(-1.0, 1.0).unwrap(), 401).unwrap();
        let r = FieldSlice::from_fn(s, |x| x[0].abs().sqrt()).unwrap();
        let est = holder_seminorm_estimate(&r, 0.5).unwrap();
        // true seminorm is 1, attained at pairs (0, y)
        assert!(est <= 1.0 + 1e-12);
        assert!(est > 1.0 - 1e-9);
    }

    fn reg(kappa: f64) -> Regularity {
        Regularity::new(kappa, 1.0, 4.0, 4.0).unwrap()
    }

    #[test]
    fn ellipticity_identity_and_diagonal() {
        let d = BoundedDomain::centered_cube(2, 1.0).unwrap();
        let g = SpaceTimeGrid::from_horizon(SpatialGrid::uniform(d, 5).unwrap(), 1.0, 3).unwrap();
        let id = CoefficientField::new(
            2,
            Arc::new(|_, _, o: &mut [f64]| o.fill(0.0)),
            Arc::new(|_, _, o: &mut [f64]| o.copy_from_slice(&[1.0, 0.0, 0.0, 1.0])),
            reg(1.0001),
        );
        assert!(ellipticity_check(&id, &g, 20).unwrap().pass);
        let diag = CoefficientField::new(
            2,
            Arc::new(|_, _, o: &mut [f64]| o.fill(0.0)),
            Arc::new(|_, _, o: &mut [f64]| o.copy_from_slice(&[2.0, 0.0, 0.0, 1.0])),
            reg(1.0),
        );
        let r = ellipticity_check(&diag, &g, 20).unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_eigenvalue, 4.0);
    }

    #[test]
    fn ellipticity_sinusoidal_diffusion() {
        // (1 + sin(x)/2)^2 ranges over [0.25, 2.25]: kappa = 4 suffices, 2 does not
        let d = BoundedDomain::interval(-std::f64::consts::PI, std::f64::consts::PI).unwrap();
        let g = SpaceTimeGrid::from_horizon(SpatialGrid::uniform(d, 401).unwrap(), 1.0, 2).unwrap();
        let field = |k| CoefficientField::scalar(|_, _| 0.0, |_, x| 1.0 + 0.5 * x.sin(), reg(k));
        assert!(ellipticity_check(&field(4.0), &g, 802).unwrap().pass);
        let r = ellipticity_check(&field(2.0), &g, 802).unwrap();
        assert!(!r.pass);
        assert!(r.max_eigenvalue > 2.0 && r.min_eigenvalue < 0.5);
    }
}
