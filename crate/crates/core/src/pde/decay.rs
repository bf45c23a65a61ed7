use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{holder_seminorm_estimate, FieldSlice};
use crate::pde::PdeSolution;
use crate::stats::{linear_fit, LinearFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    /// Grid time actually used (nearest level to the requested one).
    pub t: f64,
    /// Distance to the terminal time.
    pub gap: f64,
    pub sup_u: f64,
    /// Largest sampled `C^{delta/2}` seminorm over the gradient components.
    pub grad_holder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub delta: f64,
    pub points: Vec<DecayPoint>,
    /// `log sup|u(t)|` against `log(T - t)`; `None` when `u` vanishes.
    pub sup_fit: Option<LinearFit>,
    /// Same for the gradient seminorm.
    pub holder_fit: Option<LinearFit>,
    /// `delta / 3`, the exponent floor for the gradient estimate.
    pub exponent_floor: f64,
    /// Fitted sup-norm exponent is at least the floor.
    pub meets_floor: Option<bool>,
    /// `sup|u(t)|` decreases (within rounding) as `t` approaches `T`.
    pub monotone: bool,
}

impl DecayReport {
    pub fn sup_exponent(&self) -> Option<f64> {
        self.sup_fit.as_ref().map(|f| f.slope)
    }

    /// Fitted constant `C` of `sup|u(t)| ~ C (T - t)^exponent`.
    pub fn sup_constant(&self) -> Option<f64> {
        self.sup_fit.as_ref().map(|f| f.intercept.exp())
    }
}

/// Track `sup_x |u(t, x)|` and the Hoelder seminorm of `grad u(t, .)` along
/// `times` (each `< T`) and fit their power-law decay in `T - t`.
pub fn verify_decay_estimates(solution: &PdeSolution, times: &[f64], delta: f64) -> Result<DecayReport> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1], got {delta}")));
    }
    let grid = solution.grid();
    let t_end = grid.t_end();
    let mut levels: Vec<usize> = Vec::new();
    for &t in times {
        if !(t >= grid.t_start() && t < t_end) {
            return Err(Error::InvalidParameter(format!(
                "ladder time {t} must lie in [{}, {t_end})",
                grid.t_start()
            )));
        }
        let k = grid.nearest_level(t).min(grid.time_nodes() - 2);
        if !levels.contains(&k) {
            levels.push(k);
        }
    }
    if levels.len() < 3 {
        return Err(Error::Insufficient(format!(
            "decay ladder needs at least 3 distinct time levels, got {}",
            levels.len()
        )));
    }
    levels.sort_unstable();
    let d = grid.dim();
    let mut points = Vec::with_capacity(levels.len());
    for &k in &levels {
        let t = grid.time(k);
        let sup_u = solution.u.level(k).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let grad = solution.gradient.level(k);
        let mut grad_holder: f64 = 0.0;
        for c in 0..d {
            let comp: Vec<f64> = grad.iter().skip(c).step_by(d).copied().collect();
            let slice = FieldSlice::new(grid.space().clone(), 1, comp)?;
            grad_holder = grad_holder.max(holder_seminorm_estimate(&slice, 0.5 * delta)?);
        }
        points.push(DecayPoint {
            t,
            gap: t_end - t,
            sup_u,
            grad_holder,
        });
    }
    let fit = |ys: Vec<f64>| -> Option<LinearFit> {
        if ys.iter().any(|&y| !(y > 0.0)) {
            return None;
        }
        let xs: Vec<f64> = points.iter().map(|p| p.gap.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        linear_fit(&xs, &ly)
    };
    let sup_fit = fit(points.iter().map(|p| p.sup_u).collect());
    let holder_fit = fit(points.iter().map(|p| p.grad_holder).collect());
    // points are in increasing t, so sup_u should be non-increasing
    let monotone = points
        .windows(2)
        .all(|w| w[1].sup_u <= w[0].sup_u * (1.0 + 1e-9) + 1e-300);
    let exponent_floor = delta / 3.0;
    Ok(DecayReport {
        delta,
        meets_floor: sup_fit.as_ref().map(|f| f.slope >= exponent_floor),
        points,
        sup_fit,
        holder_fit,
        exponent_floor,
        monotone,
    })
}
