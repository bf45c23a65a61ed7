use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    ellipticity_check, sample_field, sample_vector_field, CoefficientField, GridFunction,
    ScalarMap, SpaceTimeGrid, SpatialGrid, MAX_DIM,
};
use crate::pde::{gradient_hessian, mollify};

/// Drift differences are centered while `|b| h / (a / 2) <= PECLET_LIMIT`
/// (this keeps the implicit step an M-matrix) and upwinded beyond.
pub const PECLET_LIMIT: f64 = 2.0;

/// Data of the backward problem. Domain and time interval are those of the
/// grid the problem is solved on.
#[derive(Clone)]
pub struct PdeProblem {
    pub field: CoefficientField,
    /// `f` in `d_t u + L u + f = 0`.
    pub source: Arc<ScalarMap>,
    /// Lateral boundary values `g`; must vanish at the terminal time.
    pub boundary: Arc<ScalarMap>,
    /// Mollification level, 0 for none.
    pub mollification: usize,
}

impl std::fmt::Debug for PdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeProblem")
            .field("field", &self.field)
            .field("mollification", &self.mollification)
            .finish_non_exhaustive()
    }
}

impl PdeProblem {
    /// `d_t u + L u + f = 0` with zero boundary data.
    pub fn new(field: CoefficientField, source: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            field,
            source: Arc::new(source),
            boundary: Arc::new(|_, _| 0.0),
            mollification: 0,
        }
    }

    /// `d_t u + L u = rhs`, i.e. `f = -rhs`.
    pub fn with_rhs_form(
        field: CoefficientField,
        rhs: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(field, move |t, x| -rhs(t, x))
    }

    pub fn with_boundary(mut self, g: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.boundary = Arc::new(g);
        self
    }

    pub fn with_mollification(mut self, n: usize) -> Self {
        self.mollification = n;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Residual tolerance of every per-step linear solve (relative to
    /// `max(1, |rhs|_inf)`).
    pub tolerance: f64,
    /// Sweep cap of the 2-D relaxation.
    pub max_sweeps: usize,
    /// Over-relaxation factor of the 2-D relaxation.
    pub omega: f64,
    /// Space-time samples for the ellipticity precondition.
    pub ellipticity_samples: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_sweeps: 50_000,
            omega: 1.2,
            ellipticity_samples: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub u: GridFunction,
    pub gradient: GridFunction,
    /// Row-major `d x d` per node.
    pub hessian: GridFunction,
    /// Infinity-norm residual of each backward step, earliest time first.
    pub residuals: Vec<f64>,
    /// Relaxation sweeps per step (1 for the direct 1-D solve).
    pub sweeps: Vec<usize>,
    /// Implicitness parameter of the time stepping (always 1).
    pub theta: f64,
    /// (level, node, axis) triples that needed upwinding, counted.
    pub upwind_count: usize,
}

impl PdeSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        self.u.grid()
    }
}

/// Per-level coefficient arrays: `a` (`d*d` per node), `b` (`d`), `f` (1).
struct Coefficients {
    a: Option<GridFunction>,
    b: Option<GridFunction>,
    f: Option<GridFunction>,
}

impl Coefficients {
    fn level(&self, problem: &PdeProblem, grid: &SpaceTimeGrid, k: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if let (Some(a), Some(b), Some(f)) = (&self.a, &self.b, &self.f) {
            return Ok((a.level(k).to_vec(), b.level(k).to_vec(), f.level(k).to_vec()));
        }
        let space = grid.space();
        let d = space.dim();
        let t = grid.time(k);
        let n = space.len();
        let (mut a, mut b, mut f) = (vec![0.0; n * d * d], vec![0.0; n * d], vec![0.0; n]);
        let mut x = [0.0; MAX_DIM];
        let mut sig = [0.0; MAX_DIM * MAX_DIM];
        for node in 0..n {
            space.node_point(node, &mut x[..d]);
            let x = &x[..d];
            problem.field.covariance(t, x, &mut sig[..d * d], &mut a[node * d * d..(node + 1) * d * d]);
            problem.field.drift(t, x, &mut b[node * d..(node + 1) * d]);
            f[node] = (problem.source)(t, x);
        }
        for (i, v) in a.iter().chain(&b).chain(&f).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    value: *v,
                    location: format!("coefficients at t={t}, entry {i}"),
                });
            }
        }
        Ok((a, b, f))
    }
}

fn prepare_coefficients(problem: &PdeProblem, grid: &SpaceTimeGrid) -> Result<Coefficients> {
    if problem.mollification == 0 {
        return Ok(Coefficients { a: None, b: None, f: None });
    }
    let d = grid.dim();
    let field = &problem.field;
    let a = sample_vector_field(
        |t, x, out| {
            let mut sig = [0.0; MAX_DIM * MAX_DIM];
            field.covariance(t, x, &mut sig[..d * d], out)
        },
        d * d,
        grid,
    )?;
    let b = sample_vector_field(|t, x, out| field.drift(t, x, out), d, grid)?;
    let f = sample_field(|t, x| (problem.source)(t, x), grid)?;
    let n = problem.mollification;
    Ok(Coefficients {
        a: Some(mollify(&a, n)?),
        b: Some(mollify(&b, n)?),
        f: Some(mollify(&f, n)?),
    })
}

/// Stencil weights along one axis: `(lower, center, upper)` of the operator
/// `(a/2) d_xx + b d_x`, and whether the drift was upwinded.
#[inline]
fn axis_stencil(half_a: f64, b: f64, h: f64) -> (f64, f64, f64, bool) {
    let c = half_a / (h * h);
    if b.abs() * h <= PECLET_LIMIT * half_a {
        (c - b / (2.0 * h), -2.0 * c, c + b / (2.0 * h), false)
    } else if b > 0.0 {
        (c, -2.0 * c - b / h, c + b / h, true)
    } else {
        (c - b / h, -2.0 * c + b / h, c, true)
    }
}

/// Solve the backward problem on `grid` (box domain, `d <= 2`) by implicit
/// Euler from the terminal level down to `t_start`.
pub fn solve_cauchy_dirichlet(
    problem: &PdeProblem,
    grid: &SpaceTimeGrid,
    settings: &SolverSettings,
) -> Result<PdeSolution> {
    let space = grid.space();
    let d = space.dim();
    if d != problem.field.dim() {
        return Err(Error::InvalidParameter(format!(
            "field dimension {} does not match grid dimension {d}",
            problem.field.dim()
        )));
    }
    if d > 2 {
        return Err(Error::InvalidParameter(format!(
            "the finite-difference solver supports d <= 2, got d = {d}"
        )));
    }
    let report = ellipticity_check(&problem.field, grid, settings.ellipticity_samples)?;
    if !report.pass {
        return Err(Error::Ellipticity(format!(
            "eigenvalue {} of sigma sigma^T at t={}, x={:?} is outside [1/{k}, {k}]",
            report.worst_eigenvalue,
            report.worst_time,
            report.worst_point,
            k = report.kappa
        )));
    }
    let n = space.len();
    let n_t = grid.time_nodes();
    let t_end = grid.t_end();
    let mut xb = [0.0; MAX_DIM];
    for node in (0..n).filter(|&m| space.is_boundary(m)) {
        space.node_point(node, &mut xb[..d]);
        let g = (problem.boundary)(t_end, &xb[..d]);
        if g.abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "boundary data g(T, {:?}) = {g} is incompatible with the zero terminal condition",
                &xb[..d]
            )));
        }
    }
    let coeffs = prepare_coefficients(problem, grid)?;
    let mut values = vec![0.0; n_t * n];
    let mut residuals = vec![0.0; n_t - 1];
    let mut sweeps = vec![0; n_t - 1];
    let mut upwind_count = 0;
    let dt = grid.dt();
    for k in (0..n_t - 1).rev() {
        let t = grid.time(k);
        let (a, b, f) = coeffs.level(problem, grid, k)?;
        let degenerate = (0..n)
            .filter(|&m| !space.is_boundary(m))
            .all(|m| (0..d).all(|i| a[m * d * d + i * d + i] <= 1e-14));
        if degenerate {
            return Err(Error::Ellipticity(format!(
                "diffusion vanishes at every interior node at t={t}"
            )));
        }
        let (earlier, later) = values.split_at_mut((k + 1) * n);
        let cur_level = &mut earlier[k * n..];
        let next_level = &later[..n];
        let boundary = |node: usize| {
            let mut x = [0.0; MAX_DIM];
            space.node_point(node, &mut x[..d]);
            (problem.boundary)(t, &x[..d])
        };
        let (res, sw, up) = if d == 1 {
            step_1d(space, &a, &b, &f, next_level, cur_level, dt, &boundary)
        } else {
            step_2d(space, &a, &b, &f, next_level, cur_level, dt, &boundary, settings, k)?
        };
        let scale = next_level
            .iter()
            .zip(&f)
            .map(|(u, f)| (u + dt * f).abs())
            .fold(1.0, f64::max);
        if !(res <= settings.tolerance * scale) {
            return Err(Error::SolveDiverged { step: k, residual: res });
        }
        residuals[k] = res;
        sweeps[k] = sw;
        upwind_count += up;
        if let Some(v) = cur_level.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: *v,
                location: format!("solution at time level {k}"),
            });
        }
    }
    let u = GridFunction::from_values(grid.clone(), 1, values)?;
    let (gradient, hessian) = gradient_hessian(&u);
    Ok(PdeSolution {
        u,
        gradient,
        hessian,
        residuals,
        sweeps,
        theta: 1.0,
        upwind_count,
    })
}

#[allow(clippy::too_many_arguments)]
fn step_1d(
    space: &SpatialGrid,
    a: &[f64],
    b: &[f64],
    f: &[f64],
    next: &[f64],
    cur: &mut [f64],
    dt: f64,
    boundary: &dyn Fn(usize) -> f64,
) -> (f64, usize, usize) {
    let n = space.len();
    let h = space.spacing()[0];
    let mut lower = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut upwinded = 0;
    rhs[0] = boundary(0);
    rhs[n - 1] = boundary(n - 1);
    for i in 1..n - 1 {
        let (lo, ce, up, upw) = axis_stencil(0.5 * a[i], b[i], h);
        upwinded += upw as usize;
        lower[i] = -dt * lo;
        diag[i] = 1.0 - dt * ce;
        upper[i] = -dt * up;
        rhs[i] = next[i] + dt * f[i];
    }
    // Thomas algorithm
    let mut c = vec![0.0; n];
    let mut r = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    r[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        r[i] = (rhs[i] - lower[i] * r[i - 1]) / m;
    }
    cur[n - 1] = r[n - 1];
    for i in (0..n - 1).rev() {
        cur[i] = r[i] - c[i] * cur[i + 1];
    }
    // Dirichlet rows are identities; write the data back bitwise.
    cur[0] = rhs[0];
    cur[n - 1] = rhs[n - 1];
    let mut res: f64 = 0.0;
    for i in 1..n - 1 {
        let ax = lower[i] * cur[i - 1] + diag[i] * cur[i] + upper[i] * cur[i + 1];
        res = res.max((ax - rhs[i]).abs());
    }
    (res, 1, upwinded)
}

#[allow(clippy::too_many_arguments)]
fn step_2d(
    space: &SpatialGrid,
    a: &[f64],
    b: &[f64],
    f: &[f64],
    next: &[f64],
    cur: &mut [f64],
    dt: f64,
    boundary: &dyn Fn(usize) -> f64,
    settings: &SolverSettings,
    level: usize,
) -> Result<(f64, usize, usize)> {
    let n = space.len();
    let (h0, h1) = (space.spacing()[0], space.spacing()[1]);
    let (s0, s1) = (space.strides()[0], space.strides()[1]);
    // weights: [diag, x-, x+, y-, y+, cross]
    let mut w = vec![[0.0f64; 6]; n];
    let mut rhs = vec![0.0; n];
    let mut interior = Vec::with_capacity(n);
    let mut upwinded = 0;
    for m in 0..n {
        if space.is_boundary(m) {
            rhs[m] = boundary(m);
            cur[m] = rhs[m];
            continue;
        }
        interior.push(m);
        let am = &a[m * 4..m * 4 + 4];
        let (lx, cx, ux, upx) = axis_stencil(0.5 * am[0], b[m * 2], h0);
        let (ly, cy, uy, upy) = axis_stencil(0.5 * am[3], b[m * 2 + 1], h1);
        upwinded += upx as usize + upy as usize;
        let cross = 0.5 * (am[1] + am[2]) / (4.0 * h0 * h1);
        w[m] = [1.0 - dt * (cx + cy), -dt * lx, -dt * ux, -dt * ly, -dt * uy, -dt * cross];
        rhs[m] = next[m] + dt * f[m];
        cur[m] = next[m];
    }
    let apply = |u: &[f64], m: usize| -> f64 {
        let c = &w[m];
        c[0] * u[m]
            + c[1] * u[m - s0]
            + c[2] * u[m + s0]
            + c[3] * u[m - s1]
            + c[4] * u[m + s1]
            + c[5] * (u[m + s0 + s1] - u[m + s0 - s1] - u[m - s0 + s1] + u[m - s0 - s1])
    };
    let scale = interior.iter().map(|&m| rhs[m].abs()).fold(1.0, f64::max);
    let target = 0.5 * settings.tolerance * scale;
    let mut res = f64::INFINITY;
    for sweep in 1..=settings.max_sweeps {
        for &m in &interior {
            let r = rhs[m] - apply(cur, m);
            cur[m] += settings.omega * r / w[m][0];
        }
        res = interior
            .iter()
            .map(|&m| (apply(cur, m) - rhs[m]).abs())
            .fold(0.0, f64::max);
        if res <= target {
            return Ok((res, sweep, upwinded));
        }
        if !res.is_finite() {
            break;
        }
    }
    Err(Error::SolveDiverged { step: level, residual: res })
}

/// Solve one scalar problem per drift component, `f = b_l`, zero boundary
/// data: the vector problem behind the drift-removing transform. Components
/// are solved concurrently.
pub fn solve_vector_problem(
    field: &CoefficientField,
    grid: &SpaceTimeGrid,
    mollification: usize,
    settings: &SolverSettings,
) -> Result<Vec<PdeSolution>> {
    let d = field.dim();
    (0..d)
        .into_par_iter()
        .map(|l| {
            let drift = Arc::clone(field.drift_map());
            let problem = PdeProblem::new(field.clone(), move |t, x| {
                let mut b = [0.0; MAX_DIM];
                drift(t, x, &mut b[..d]);
                b[l]
            })
            .with_mollification(mollification);
            solve_cauchy_dirichlet(&problem, grid, settings)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundedDomain, Regularity};

    fn heat_field(a: f64) -> CoefficientField {
        let s = a.sqrt();
        CoefficientField::scalar(|_, _| 0.0, move |_, _| s, Regularity::new(a.max(1.0 / a), 1.0, 4.0, 4.0).unwrap())
    }

    fn unit_grid(nx: usize, horizon: f64, nt: usize) -> SpaceTimeGrid {
        let dom = BoundedDomain::interval(0.0, 1.0).unwrap();
        SpaceTimeGrid::from_horizon(SpatialGrid::uniform(dom, nx).unwrap(), horizon, nt).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let p = PdeProblem::new(heat_field(2.0), |_, _| 0.0);
        let s = solve_cauchy_dirichlet(&p, &unit_grid(21, 1.0, 11), &SolverSettings::default()).unwrap();
        assert!(s.u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relaxes_to_steady_parabola() {
        let p = PdeProblem::new(heat_field(2.0), |_, _| 1.0);
        let g = unit_grid(41, 5.0, 1001);
        let s = solve_cauchy_dirichlet(&p, &g, &SolverSettings::default()).unwrap();
        assert!((s.u.at(0, 20, 0) - 0.125).abs() < 1e-6);
        assert!(s.max_residual() <= 1e-10);
        // terminal and boundary conditions hold exactly
        assert!(s.u.level(1000).iter().all(|&v| v == 0.0));
        assert!((0..1001).all(|k| s.u.at(k, 0, 0) == 0.0 && s.u.at(k, 40, 0) == 0.0));
    }

    #[test]
    fn rhs_form_negates_source() {
        let g = unit_grid(21, 1.0, 51);
        let a = solve_cauchy_dirichlet(&PdeProblem::new(heat_field(1.0), |_, x| x[0]), &g, &SolverSettings::default()).unwrap();
        let b = solve_cauchy_dirichlet(&PdeProblem::with_rhs_form(heat_field(1.0), |_, x| -x[0]), &g, &SolverSettings::default()).unwrap();
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn incompatible_boundary_rejected() {
        let p = PdeProblem::new(heat_field(1.0), |_, _| 0.0).with_boundary(|_, _| 1.0);
        assert!(matches!(
            solve_cauchy_dirichlet(&p, &unit_grid(11, 1.0, 11), &SolverSettings::default()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn nonelliptic_field_rejected() {
        let f = CoefficientField::scalar(|_, _| 1.0, |_, _| 0.0, Regularity::new(2.0, 1.0, 4.0, 4.0).unwrap());
        let p = PdeProblem::new(f, |_, _| 1.0);
        assert!(matches!(
            solve_cauchy_dirichlet(&p, &unit_grid(11, 1.0, 11), &SolverSettings::default()),
            Err(Error::Ellipticity(_))
        ));
    }

    #[test]
    fn strong_drift_is_upwinded() {
        let f = CoefficientField::scalar(|_, _| 50.0, |_, _| 1.0, Regularity::new(1.0, 1.0, 4.0, 4.0).unwrap());
        let p = PdeProblem::new(f, |_, _| -1.0);
        let s = solve_cauchy_dirichlet(&p, &unit_grid(21, 1.0, 21), &SolverSettings::default()).unwrap();
        assert!(s.upwind_count > 0);
        // maximum principle: f <= 0, g = 0 gives u <= 0
        assert!(s.u.values().iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn two_dimensional_product_solution() {
        // a = I on (0,1)^2 with f = 1: compare against the 1-D series bound
        // via symmetry and the maximum principle.
        let reg = Regularity::new(1.0, 1.0, 4.0, 4.0).unwrap();
        let field = CoefficientField::new(
            2,
            Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            Arc::new(|_, _, out: &mut [f64]| {
                out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            }),
            reg,
        );
        let dom = BoundedDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = SpaceTimeGrid::from_horizon(SpatialGrid::uniform(dom, 21).unwrap(), 0.5, 51).unwrap();
        let s = solve_cauchy_dirichlet(&PdeProblem::new(field, |_, _| 1.0), &g, &SolverSettings::default()).unwrap();
        let c = g.space().flat_index(&[10, 10]);
        let v = s.u.at(0, c, 0);
        // Steady value of -(1/2) Lap u = 1 at the center of the unit square is 0.1473...
        assert!(v > 0.13 && v < 0.1474, "{v}");
        let sym = g.space().flat_index(&[4, 13]);
        let mirror = g.space().flat_index(&[13, 4]);
        assert!((s.u.at(0, sym, 0) - s.u.at(0, mirror, 0)).abs() < 1e-8);
        assert!(s.max_residual() <= 1e-10 * 2.0);
    }
}
