use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lqp_norm_fn, symmetric_eigenvalues, CoefficientField, SpaceTimeGrid, SpatialGrid, MAX_DIM};
use crate::pde::{solve_vector_problem, PdeSolution, SolverSettings};

/// Largest admissible `sup |grad u|`.
const GRADIENT_TARGET: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSettings {
    /// Time step of the window solves; candidate lengths are multiples of it.
    pub dt: f64,
    /// Shortest window worth using, in steps.
    pub min_steps: usize,
    /// Optional cap `M` on `||b||_{L^q_p}` over the whole interval.
    pub drift_cap: Option<f64>,
    pub mollification: usize,
    pub solver: SolverSettings,
}

impl WindowSettings {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            min_steps: 4,
            drift_cap: None,
            mollification: 0,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowProbe {
    pub length: f64,
    pub start: f64,
    pub sup_grad: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowChoice {
    /// Selected window length `eps`.
    pub length: f64,
    pub steps: usize,
    /// Worst `sup |grad u|` over the probe windows of the selected length.
    pub sup_grad: f64,
    /// `||b||_{L^q_p}` over the full interval.
    pub drift_norm: f64,
    pub probes: Vec<WindowProbe>,
}

/// Bound on the Lipschitz constant of `x -> u(t, x)` for the vector solution
/// `u = (u^1, ..., u^d)`: the larger of the worst nodal operator norm of the
/// Jacobian and the Frobenius norm of the per-entry maximal difference
/// quotients, which bounds the slope of the multilinear interpolant.
pub fn jacobian_bound(solutions: &[PdeSolution]) -> f64 {
    let d = solutions.len();
    if d == 0 {
        return 0.0;
    }
    let grid = solutions[0].grid();
    let space = grid.space();
    let n = space.len();
    let mut worst: f64 = 0.0;
    let mut jac = [0.0; MAX_DIM * MAX_DIM];
    let mut gram = [0.0; MAX_DIM * MAX_DIM];
    let mut idx = [0usize; MAX_DIM];
    for k in 0..grid.time_nodes() {
        for node in 0..n {
            for (l, sol) in solutions.iter().enumerate() {
                for i in 0..d {
                    jac[l * d + i] = sol.gradient.at(k, node, i);
                }
            }
            let norm = if d == 1 {
                jac[0].abs()
            } else {
                for i in 0..d {
                    for j in 0..d {
                        gram[i * d + j] = (0..d).map(|l| jac[l * d + i] * jac[l * d + j]).sum();
                    }
                }
                symmetric_eigenvalues(&gram[..d * d], d)
                    .last()
                    .copied()
                    .unwrap_or(0.0)
                    .max(0.0)
                    .sqrt()
            };
            worst = worst.max(norm);
        }
        let mut quot = [0.0f64; MAX_DIM * MAX_DIM];
        for (l, sol) in solutions.iter().enumerate() {
            let u = sol.u.level(k);
            for node in 0..n {
                space.multi_index(node, &mut idx[..d]);
                for i in 0..d {
                    if idx[i] + 1 < space.nodes()[i] {
                        let q = (u[node + space.strides()[i]] - u[node]).abs() / space.spacing()[i];
                        quot[l * d + i] = quot[l * d + i].max(q);
                    }
                }
            }
        }
        let frob = quot[..d * d].iter().map(|q| q * q).sum::<f64>().sqrt();
        worst = worst.max(frob);
    }
    worst
}

fn probe(
    field: &CoefficientField,
    space: &SpatialGrid,
    start: f64,
    steps: usize,
    settings: &WindowSettings,
) -> Result<WindowProbe> {
    let length = steps as f64 * settings.dt;
    let grid = SpaceTimeGrid::new(space.clone(), start, start + length, steps + 1)?;
    let sols = solve_vector_problem(field, &grid, settings.mollification, &settings.solver)?;
    let sup_grad = jacobian_bound(&sols);
    Ok(WindowProbe {
        length,
        start,
        sup_grad,
        pass: sup_grad <= GRADIENT_TARGET,
    })
}

/// Longest window `eps` (a multiple of `settings.dt`, at most the whole
/// interval) on which the vector problem `f = b`, `g = 0`, `u(t0) = 0` keeps
/// `sup |grad u| <= 1/2`. Windows are probed at the start, middle and end
/// of `[t_start, t_end]` (only the start for time-homogeneous fields) and
/// the length is found by bisection.
pub fn choose_window(
    field: &CoefficientField,
    space: &SpatialGrid,
    t_start: f64,
    t_end: f64,
    settings: &WindowSettings,
) -> Result<WindowChoice> {
    let dt = settings.dt;
    let span = t_end - t_start;
    if !(dt > 0.0 && span > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and t_start < t_end, got dt={dt}, [{t_start}, {t_end}]"
        )));
    }
    let max_steps = (span / dt).round() as usize;
    if (max_steps as f64 * dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} does not divide {span}")));
    }
    let min_steps = settings.min_steps.max(1);
    if max_steps < min_steps {
        return Err(Error::InvalidParameter(format!(
            "interval holds {max_steps} steps, fewer than the minimum {min_steps}"
        )));
    }
    let d = field.dim();
    let full = SpaceTimeGrid::new(space.clone(), t_start, t_end, max_steps + 1)?;
    let drift_norm = lqp_norm_fn(
        |t, x| {
            let mut b = [0.0; MAX_DIM];
            field.drift(t, x, &mut b[..d]);
            b[..d].iter().map(|v| v * v).sum::<f64>().sqrt()
        },
        &full,
        field.regularity().p,
        field.regularity().q,
    )?;
    if let Some(cap) = settings.drift_cap {
        if drift_norm > cap {
            return Err(Error::Hypothesis(format!(
                "||b||_{{L^q_p}} = {drift_norm} exceeds the cap {cap}"
            )));
        }
    }
    let mut probes = Vec::new();
    let mut test = |steps: usize| -> Result<(bool, f64)> {
        let last = max_steps - steps;
        let mut starts = vec![0];
        if !field.is_time_homogeneous() {
            starts.push(last / 2);
            starts.push(last);
        }
        starts.dedup();
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for s in starts {
            let p = probe(field, space, t_start + s as f64 * dt, steps, settings)?;
            worst = worst.max(p.sup_grad);
            ok &= p.pass;
            probes.push(p);
            if !ok {
                break;
            }
        }
        Ok((ok, worst))
    };
    let (ok, grad) = test(max_steps)?;
    let (steps, sup_grad) = if ok {
        (max_steps, grad)
    } else {
        let (ok, grad) = test(min_steps)?;
        if !ok {
            return Err(Error::NoAdmissibleWindow {
                min_steps,
                tried: min_steps as f64 * dt,
                sup_grad: grad,
            });
        }
        let (mut lo, mut lo_grad, mut hi) = (min_steps, grad, max_steps);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let (ok, grad) = test(mid)?;
            if ok {
                lo = mid;
                lo_grad = grad;
            } else {
                hi = mid;
            }
        }
        (lo, lo_grad)
    };
    Ok(WindowChoice {
        length: steps as f64 * dt,
        steps,
        sup_grad,
        drift_norm,
        probes,
    })
}
