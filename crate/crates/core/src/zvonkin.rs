//! The drift-removing change of variables `Phi(t, x) = x + u(t, x)`, where
//! `u = (u^1, ..., u^d)` solves the backward problem with source `f = b_l`,
//! zero boundary data and `u(t0) = 0` on a window `[s0, t0]`.
//!
//! On an admissible window `sup |grad u| <= 1/2`, so `Phi(t, .)` is
//! bi-Lipschitz with constants `1/2` and `3/2` and `x -> y - u(t, x)` is a
//! contraction; the inverse is computed by that fixed-point iteration.
//! `Y = Phi(t, X)` then solves the drift-free equation `dY = Theta(t, Y) dB`
//! with `Theta = ((I + grad u) sigma) o Phi^{-1}`.
//!
//! Outside the closed box `u` is extended by zero, so `Phi` is the identity
//! there.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    symmetric_eigenvalues, BoundedDomain, CoefficientField, GridFunction, Region, SpaceTimeGrid,
    SpatialGrid, Usage, MAX_DIM,
};
use crate::pde::{choose_window, jacobian_bound, solve_vector_problem, SolverSettings, WindowChoice, WindowSettings};
use crate::rng::StreamSpec;
use crate::sde::{em_step, PathOutcome, PathSample, Recorder, Recording, TimeStepping};

#[derive(Debug, Clone, PartialEq)]
pub struct TransformSettings {
    /// Fixed-point iteration stops once a step is below this.
    pub inverse_tolerance: f64,
    pub max_iterations: usize,
    /// Random node pairs checked against the bi-Lipschitz bounds.
    pub audit_pairs: usize,
    pub audit_seed: u64,
    pub mollification: usize,
    pub solver: SolverSettings,
}

impl Default for TransformSettings {
    fn default() -> Self {
        Self {
            inverse_tolerance: 1e-12,
            max_iterations: 60,
            audit_pairs: 1000,
            audit_seed: 0x5eed_a0d1,
            mollification: 0,
            solver: SolverSettings::default(),
        }
    }
}

/// Outcome of checking `|x - y|/2 <= |Phi(x) - Phi(y)| <= 3|x - y|/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLipschitzAudit {
    pub pairs: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub violations: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub x: [f64; MAX_DIM],
    pub iterations: usize,
    /// Size of the last fixed-point step.
    pub last_step: f64,
}

impl Inversion {
    pub fn point(&self, d: usize) -> &[f64] {
        &self.x[..d]
    }
}

/// Per-window transform data. Immutable once built; share it freely.
#[derive(Debug, Clone)]
pub struct TransformBundle {
    window: (f64, f64),
    /// `u`, `d` components.
    u: GridFunction,
    /// `grad u`, row-major `J[l][i] = d_i u^l`.
    jacobian: GridFunction,
    sup_grad: f64,
    inverse_tolerance: f64,
    max_iterations: usize,
    audit: BiLipschitzAudit,
}

impl TransformBundle {
    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.u.components()
    }

    pub fn u(&self) -> &GridFunction {
        &self.u
    }

    pub fn jacobian(&self) -> &GridFunction {
        &self.jacobian
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        self.u.grid()
    }

    /// Lipschitz bound of `u(t, .)` certified at build time (`<= 1/2`).
    pub fn sup_grad(&self) -> f64 {
        self.sup_grad
    }

    pub fn audit(&self) -> &BiLipschitzAudit {
        &self.audit
    }

    pub fn inverse_tolerance(&self) -> f64 {
        self.inverse_tolerance
    }

    fn in_box(&self, x: &[f64]) -> bool {
        self.grid().domain().contains_closed(x)
    }

    /// `u(t, x)`, zero outside the closed box.
    pub fn u_at(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if self.in_box(x) {
            self.u.interpolate(t, x, out)
        } else {
            self.check_time(t, x)?;
            out.fill(0.0);
            Ok(())
        }
    }

    fn check_time(&self, t: f64, x: &[f64]) -> Result<()> {
        let (a, b) = self.window;
        let tol = 1e-9 * (b - a);
        if t >= a - tol && t <= b + tol {
            Ok(())
        } else {
            Err(Error::OutOfGrid { t, x: x.to_vec() })
        }
    }

    /// `grad u(t, x)` (row-major), zero outside the closed box.
    pub fn grad_u_at(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if self.in_box(x) {
            self.jacobian.interpolate(t, x, out)
        } else {
            self.check_time(t, x)?;
            out.fill(0.0);
            Ok(())
        }
    }

    /// `Phi(t, x) = x + u(t, x)`.
    pub fn phi(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.u_at(t, x, out)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o += xi;
        }
        Ok(())
    }

    /// `grad Phi(t, x) = I + grad u(t, x)`.
    pub fn phi_jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        self.grad_u_at(t, x, out)?;
        for i in 0..d {
            out[i * d + i] += 1.0;
        }
        Ok(())
    }

    /// `Phi` on the grid nodes (`x + u`).
    pub fn phi_grid(&self) -> GridFunction {
        let grid = self.grid().clone();
        let space = grid.space();
        let d = self.dim();
        let mut x = vec![0.0; d];
        let mut vals = self.u.values().to_vec();
        for k in 0..grid.time_nodes() {
            for n in 0..space.len() {
                space.node_point(n, &mut x);
                for i in 0..d {
                    vals[(k * space.len() + n) * d + i] += x[i];
                }
            }
        }
        GridFunction::from_values(grid, d, vals).expect("finite transform values")
    }

    /// Solve `Phi(t, x) = y` by `x_{k+1} = y - u(t, x_k)` from `x_0 = y`.
    /// Points outside the closed box are their own preimage.
    pub fn invert(&self, t: f64, y: &[f64]) -> Result<Inversion> {
        let d = self.dim();
        let mut out = Inversion {
            x: [0.0; MAX_DIM],
            iterations: 0,
            last_step: 0.0,
        };
        out.x[..d].copy_from_slice(y);
        if !self.in_box(y) {
            self.check_time(t, y)?;
            return Ok(out);
        }
        let mut u = [0.0; MAX_DIM];
        for it in 1..=self.max_iterations {
            if !self.in_box(&out.x[..d]) {
                return Err(Error::Inversion(format!(
                    "iterate {:?} left the grid box while inverting y = {y:?} at t = {t}",
                    &out.x[..d]
                )));
            }
            self.u.interpolate(t, &out.x[..d], &mut u[..d])?;
            let mut step2 = 0.0;
            for i in 0..d {
                let next = y[i] - u[i];
                step2 += (next - out.x[i]) * (next - out.x[i]);
                out.x[i] = next;
            }
            out.iterations = it;
            out.last_step = step2.sqrt();
            if out.last_step <= self.inverse_tolerance {
                return Ok(out);
            }
        }
        Err(Error::Inversion(format!(
            "no convergence in {} iterations at y = {y:?}, t = {t} (last step {:e})",
            self.max_iterations, out.last_step
        )))
    }

    /// `(I + grad u(t, x)) sigma(sigma_time, x)` for a known preimage `x`.
    pub fn theta_at_preimage(
        &self,
        field: &CoefficientField,
        t: f64,
        sigma_time: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let d = self.dim();
        let mut jac = [0.0; MAX_DIM * MAX_DIM];
        let mut sig = [0.0; MAX_DIM * MAX_DIM];
        self.phi_jacobian(t, x, &mut jac[..d * d])?;
        field.diffusion(sigma_time, x, &mut sig[..d * d]);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += jac[i * d + k] * sig[k * d + j];
                }
                out[i * d + j] = s;
            }
        }
        Ok(())
    }

    /// Diffusion of the transformed equation, `Theta(t, y)`.
    pub fn theta(&self, field: &CoefficientField, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        let inv = self.invert(t, y)?;
        self.theta_at_preimage(field, t, t, inv.point(self.dim()), out)
    }
}

fn audit_pairs(u: &GridFunction, pairs: usize, seed: u64) -> BiLipschitzAudit {
    let grid = u.grid();
    let space = grid.space();
    let d = space.dim();
    let n = space.len();
    let tolerance = 1e-12;
    let mut noise = StreamSpec::new(seed, 0).noise();
    let (mut xa, mut xb) = (vec![0.0; d], vec![0.0; d]);
    let mut audit = BiLipschitzAudit {
        pairs: 0,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        violations: 0,
        tolerance,
    };
    while audit.pairs < pairs {
        let k = noise.index_below(grid.time_nodes());
        let (i, j) = (noise.index_below(n), noise.index_below(n));
        if i == j {
            continue;
        }
        space.node_point(i, &mut xa);
        space.node_point(j, &mut xb);
        let (mut num, mut den) = (0.0, 0.0);
        for c in 0..d {
            let dx = xa[c] - xb[c];
            let dphi = dx + u.at(k, i, c) - u.at(k, j, c);
            num += dphi * dphi;
            den += dx * dx;
        }
        let r = (num / den).sqrt();
        audit.min_ratio = audit.min_ratio.min(r);
        audit.max_ratio = audit.max_ratio.max(r);
        if r < 0.5 * (1.0 - tolerance) || r > 1.5 * (1.0 + tolerance) {
            audit.violations += 1;
        }
        audit.pairs += 1;
    }
    audit
}

/// Solve the vector problem on `grid` (the window is the grid's time
/// interval), certify `sup |grad u| <= 1/2` and audit the bi-Lipschitz
/// bounds. Fails closed on either check.
pub fn build_transform(
    field: &CoefficientField,
    grid: &SpaceTimeGrid,
    settings: &TransformSettings,
) -> Result<TransformBundle> {
    field.check_integrability(Usage::Transform)?;
    let d = field.dim();
    let sols = solve_vector_problem(field, grid, settings.mollification, &settings.solver)?;
    let sup_grad = jacobian_bound(&sols);
    if sup_grad > 0.5 {
        return Err(Error::WindowTooLong { sup_grad });
    }
    let levels = grid.time_nodes();
    let n = grid.space().len();
    let mut u = vec![0.0; levels * n * d];
    let mut jac = vec![0.0; levels * n * d * d];
    for (l, sol) in sols.iter().enumerate() {
        for k in 0..levels {
            for node in 0..n {
                let at = k * n + node;
                u[at * d + l] = sol.u.at(k, node, 0);
                for i in 0..d {
                    jac[at * d * d + l * d + i] = sol.gradient.at(k, node, i);
                }
            }
        }
    }
    let u = GridFunction::from_values(grid.clone(), d, u)?;
    let jacobian = GridFunction::from_values(grid.clone(), d * d, jac)?;
    let audit = audit_pairs(&u, settings.audit_pairs, settings.audit_seed);
    if audit.violations > 0 {
        return Err(Error::Audit(format!(
            "{} of {} node pairs violate the bounds (ratios in [{}, {}])",
            audit.violations, audit.pairs, audit.min_ratio, audit.max_ratio
        )));
    }
    Ok(TransformBundle {
        window: (grid.t_start(), grid.t_end()),
        u,
        jacobian,
        sup_grad,
        inverse_tolerance: settings.inverse_tolerance,
        max_iterations: settings.max_iterations,
        audit,
    })
}

/// Eigenvalue range of `Theta Theta^T` over sampled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaAudit {
    pub pass: bool,
    pub lower: f64,
    pub upper: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub samples: usize,
}

/// Check `Theta Theta^T` against `[1/(4 kappa), 9 kappa / 4]` at random
/// points of the window: singular values of `I + grad u` lie in `[1/2, 3/2]`.
pub fn audit_theta_ellipticity(
    bundle: &TransformBundle,
    field: &CoefficientField,
    samples: usize,
    seed: u64,
) -> Result<ThetaAudit> {
    let d = bundle.dim();
    let kappa = field.regularity().kappa;
    let (lower, upper) = (0.25 / kappa, 2.25 * kappa);
    let dom = bundle.grid().domain();
    let (t0, t1) = bundle.window();
    let mut noise = StreamSpec::new(seed, 1).noise();
    let mut y = vec![0.0; d];
    let mut th = [0.0; MAX_DIM * MAX_DIM];
    let mut gram = [0.0; MAX_DIM * MAX_DIM];
    let mut rep = ThetaAudit {
        pass: true,
        lower,
        upper,
        min_eigenvalue: f64::INFINITY,
        max_eigenvalue: f64::NEG_INFINITY,
        samples,
    };
    for _ in 0..samples {
        let t = t0 + noise.uniform() * (t1 - t0);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dom.lo()[i] + noise.uniform() * dom.width(i);
        }
        bundle.theta(field, t, &y, &mut th[..d * d])?;
        for i in 0..d {
            for j in 0..d {
                gram[i * d + j] = (0..d).map(|k| th[i * d + k] * th[j * d + k]).sum();
            }
        }
        for lam in symmetric_eigenvalues(&gram[..d * d], d) {
            rep.min_eigenvalue = rep.min_eigenvalue.min(lam);
            rep.max_eigenvalue = rep.max_eigenvalue.max(lam);
            if lam < lower * (1.0 - 1e-12) || lam > upper * (1.0 + 1e-12) {
                rep.pass = false;
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSettings {
    /// Spatial nodes per axis of the transform grid.
    pub nodes_per_axis: usize,
    /// Time step of the transform solves.
    pub pde_dt: f64,
    pub window: WindowSettings,
    pub transform: TransformSettings,
}

impl PlanSettings {
    pub fn new(nodes_per_axis: usize, pde_dt: f64) -> Self {
        Self {
            nodes_per_axis,
            pde_dt,
            window: WindowSettings::new(pde_dt),
            transform: TransformSettings::default(),
        }
    }
}

/// One stretch of simulation steps `[start_step, end_step)` served by a bundle
/// whose clock reads `t + time_shift`.
#[derive(Debug, Clone)]
pub struct Segment {
    pub start_step: usize,
    pub end_step: usize,
    pub bundle: Arc<TransformBundle>,
    pub time_shift: f64,
}

/// Windows covering `[0, horizon]` and their transforms. A time-homogeneous
/// field needs one bundle: the solution on `[s0, t0]` depends on `t0 - t`
/// only, so every window reuses it with a clock shift.
#[derive(Debug, Clone)]
pub struct ZvonkinPlan {
    pub field: CoefficientField,
    pub domain: BoundedDomain,
    pub stepping: TimeStepping,
    pub window: WindowChoice,
    pub segments: Vec<Segment>,
}

impl ZvonkinPlan {
    pub fn new(
        field: &CoefficientField,
        domain: &BoundedDomain,
        horizon: f64,
        dt: f64,
        settings: &PlanSettings,
    ) -> Result<Self> {
        field.check_integrability(Usage::Transform)?;
        let stepping = TimeStepping::horizon(horizon, dt)?;
        let space = SpatialGrid::uniform(domain.clone(), settings.nodes_per_axis)?;
        let mut wset = settings.window.clone();
        wset.dt = settings.pde_dt;
        wset.mollification = settings.transform.mollification;
        let window = choose_window(field, &space, 0.0, horizon, &wset)?;
        let per = ((window.length / dt) * (1.0 + 1e-9)).floor() as usize;
        if per == 0 {
            return Err(Error::InvalidParameter(format!(
                "admissible window {} is shorter than the simulation step {dt}",
                window.length
            )));
        }
        let mut segments = Vec::new();
        let shared = if field.is_time_homogeneous() {
            let grid = SpaceTimeGrid::new(space.clone(), 0.0, window.length, window.steps + 1)?;
            Some(Arc::new(build_transform(field, &grid, &settings.transform)?))
        } else {
            None
        };
        let mut start = 0;
        while start < stepping.steps {
            let end = (start + per).min(stepping.steps);
            let (s0, t0) = (stepping.time(start), stepping.time(end));
            let (bundle, time_shift) = match &shared {
                Some(b) => (Arc::clone(b), window.length - t0),
                None => {
                    let steps = (((t0 - s0) / settings.pde_dt).round() as usize).max(1);
                    let grid = SpaceTimeGrid::new(space.clone(), s0, t0, steps + 1)?;
                    (Arc::new(build_transform(field, &grid, &settings.transform)?), 0.0)
                }
            };
            segments.push(Segment {
                start_step: start,
                end_step: end,
                bundle,
                time_shift,
            });
            start = end;
        }
        Ok(Self {
            field: field.clone(),
            domain: domain.clone(),
            stepping,
            window,
            segments,
        })
    }
}

/// Simulate `X` through `Y = Phi(t, X)`: Euler steps of `dY = Theta dB` on
/// each window, `X = Phi^{-1}(t, Y)` at every grid time, stopped at the
/// first grid time with `X` outside the domain. Uses the same noise
/// sequence as the direct simulator for the same stream.
pub fn run_via_zvonkin<F>(
    plan: &ZvonkinPlan,
    x0: &[f64],
    stream: StreamSpec,
    mut observe: F,
) -> Result<PathOutcome>
where
    F: FnMut(usize, f64, &[f64]),
{
    let d = plan.field.dim();
    if x0.len() != d || !plan.domain.contains(x0) {
        return Err(Error::InvalidParameter(format!(
            "initial point {x0:?} lies outside the domain"
        )));
    }
    let st = plan.stepping;
    let dt = st.dt;
    let sqrt_dt = dt.sqrt();
    let mut noise = stream.noise();
    let mut x = [0.0; MAX_DIM];
    let mut y = [0.0; MAX_DIM];
    let mut next = [0.0; MAX_DIM];
    let zero = [0.0; MAX_DIM];
    let mut theta = [0.0; MAX_DIM * MAX_DIM];
    let mut xi = [0.0; MAX_DIM];
    x[..d].copy_from_slice(x0);
    observe(0, st.t_start, &x[..d]);
    for seg in &plan.segments {
        let b = &seg.bundle;
        b.phi(st.time(seg.start_step) + seg.time_shift, &x[..d], &mut y[..d])?;
        for k in seg.start_step..seg.end_step {
            let t = st.time(k);
            b.theta_at_preimage(&plan.field, t + seg.time_shift, t, &x[..d], &mut theta[..d * d])?;
            noise.fill_normal(&mut xi[..d]);
            em_step(&y[..d], &zero[..d], &theta[..d * d], dt, sqrt_dt, &xi[..d], &mut next[..d]);
            y[..d].copy_from_slice(&next[..d]);
            let t1 = st.time(k + 1);
            if y[..d].iter().any(|v| !v.is_finite()) {
                x[..d].copy_from_slice(&y[..d]);
                observe(k + 1, t1, &x[..d]);
                return Ok(PathOutcome {
                    steps: k + 1,
                    exit_step: None,
                    blown_up: true,
                });
            }
            let inv = b.invert(t1 + seg.time_shift, &y[..d])?;
            x[..d].copy_from_slice(inv.point(d));
            observe(k + 1, t1, &x[..d]);
            if !plan.domain.contains(&x[..d]) {
                return Ok(PathOutcome {
                    steps: k + 1,
                    exit_step: Some(k + 1),
                    blown_up: false,
                });
            }
        }
    }
    Ok(PathOutcome {
        steps: st.steps,
        exit_step: None,
        blown_up: false,
    })
}

pub fn simulate_via_zvonkin(
    plan: &ZvonkinPlan,
    x0: &[f64],
    stream: StreamSpec,
    recording: Recording,
) -> Result<PathSample> {
    let mut rec = Recorder::new(recording, plan.field.dim());
    let out = run_via_zvonkin(plan, x0, stream, |k, t, x| rec.observe(k, t, x))?;
    let exit_time = out.exit_step.map(|k| plan.stepping.time(k));
    Ok(rec.finish(
        exit_time,
        out.exit_step.is_some(),
        out.blown_up,
        stream,
        plan.stepping.dt,
        out.steps,
    ))
}
