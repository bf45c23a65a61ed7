use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_integrability, lqp_norm_fn, BoundedDomain, CoefficientField, SpaceTimeGrid, SpatialGrid, Usage};
use crate::monte_carlo::try_map_paths;
use crate::rng::StreamSpec;
use crate::sde::{run_path, TimeStepping};
use crate::stats::{linear_fit, LinearFit, MeanEstimate};
use crate::verify::grid_step;

/// Conditional spot checks: restart fresh sub-paths from states `X_{t}` of
/// the main run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSettings {
    /// Restart time (a grid time).
    pub time: f64,
    /// Number of sampled states (the first surviving paths in index order).
    pub states: usize,
    pub paths_per_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrylovSettings {
    pub x0: Vec<f64>,
    pub dt: f64,
    /// `(r, s)` pairs with strictly decreasing lengths `s - r`.
    pub intervals: Vec<(f64, f64)>,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub paths: usize,
    pub master_seed: u64,
    /// Spatial nodes per axis and time steps of the norm quadrature.
    pub norm_nodes: usize,
    pub norm_time_steps: usize,
    pub restart: Option<RestartSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrylovRow {
    pub r: f64,
    pub s: f64,
    pub lhs: f64,
    pub se: f64,
    /// `lhs / ((s - r)^delta ||f||)`.
    pub ratio: f64,
    /// `C_hat (s - r)^delta ||f||`.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCheck {
    pub r: f64,
    pub s: f64,
    pub state: Vec<f64>,
    pub estimate: f64,
    pub se: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrylovReport {
    pub delta: f64,
    pub f_norm: f64,
    pub rows: Vec<KrylovRow>,
    /// `log lhs` against `log(s - r)`; `None` if some `lhs` vanishes.
    pub fit: Option<LinearFit>,
    pub delta_hat: Option<f64>,
    /// `delta_hat -+ 2 SE`.
    pub band: Option<(f64, f64)>,
    /// Smallest constant with `lhs <= C (s - r)^delta ||f||` on the ladder.
    pub c_hat: f64,
    /// `max ratio / min ratio` over the ladder.
    pub ratio_spread: f64,
    /// Least-squares constant with the exponent held fixed:
    /// `exp(mean log ratio)` over the positive ratios.
    pub c_fit: f64,
    pub dominated: bool,
    pub pass: bool,
    /// Fraction of paths that left the domain before the end of the ladder.
    pub exited_fraction: f64,
    pub conditional: Vec<ConditionalCheck>,
    /// Largest ratio over the unconditional and conditional estimates.
    pub c_hat_uniform: f64,
}

struct OccupationRun {
    /// Integral of `|f|` up to `t ^ tau` at each checkpoint.
    integrals: Vec<f64>,
    exit_step: Option<usize>,
    /// State at the capture step, if the path was still inside then.
    captured: Option<Vec<f64>>,
}

/// Integral of `|f|` along one stopped path (trapezoid rule on the
/// simulation grid), read off at the sorted `checkpoints`.
#[allow(clippy::too_many_arguments)]
fn occupation_run(
    field: &CoefficientField,
    f: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    x0: &[f64],
    domain: &BoundedDomain,
    stepping: TimeStepping,
    stream: StreamSpec,
    checkpoints: &[usize],
    capture: Option<usize>,
) -> Result<OccupationRun> {
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut integrals = vec![0.0; checkpoints.len()];
    let mut next_cp = 0;
    let mut captured = None;
    let outcome = run_path(field, x0, domain, stepping, stream, |k, t, x| {
        let v = f(t, x).abs();
        if k > 0 {
            acc += 0.5 * stepping.dt * (prev + v);
        }
        prev = v;
        while next_cp < checkpoints.len() && checkpoints[next_cp] == k {
            integrals[next_cp] = acc;
            next_cp += 1;
        }
        if capture == Some(k) {
            captured = Some(x.to_vec());
        }
    })?;
    for v in integrals.iter_mut().skip(next_cp) {
        *v = acc;
    }
    if outcome.exit_step.is_some_and(|e| capture.is_some_and(|c| e <= c)) {
        captured = None;
    }
    Ok(OccupationRun {
        integrals,
        exit_step: outcome.exit_step,
        captured,
    })
}

/// Estimate `E int_{r ^ tau}^{s ^ tau} |f(t, X_t)| dt` over the interval
/// ladder, fit its power in `s - r` and compare against
/// `(s - r)^delta ||f||_{L^q_p((0, T) x D)}`.
pub fn krylov_check(
    field: &CoefficientField,
    f: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    domain: &BoundedDomain,
    settings: &KrylovSettings,
) -> Result<KrylovReport> {
    let d = field.dim();
    check_integrability(d, settings.p, settings.q, Usage::Krylov)?;
    let max_delta = 1.0 - d as f64 / (2.0 * settings.p) - 1.0 / settings.q;
    if !(settings.delta > 0.0 && settings.delta < max_delta) {
        return Err(Error::InvalidParameter(format!(
            "delta = {} must lie in (0, {max_delta})",
            settings.delta
        )));
    }
    let iv = &settings.intervals;
    if iv.len() < 2 {
        return Err(Error::InvalidParameter("the interval ladder needs at least two entries".into()));
    }
    if iv.iter().any(|(r, s)| !(0.0 <= *r && r < s)) || iv.windows(2).any(|w| !(w[1].1 - w[1].0 < w[0].1 - w[0].0)) {
        return Err(Error::InvalidParameter(
            "ladder intervals must satisfy 0 <= r < s with strictly decreasing lengths".into(),
        ));
    }
    if settings.paths < 2 {
        return Err(Error::InvalidParameter("need at least two paths".into()));
    }
    let horizon = iv.iter().map(|p| p.1).fold(0.0, f64::max);
    let stepping = TimeStepping::horizon(horizon, settings.dt)?;
    let mut steps: Vec<usize> = Vec::new();
    for &(r, s) in iv {
        steps.push(grid_step(&stepping, r)?);
        steps.push(grid_step(&stepping, s)?);
    }
    let mut checkpoints = steps.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let cp_index = |k: usize| checkpoints.binary_search(&k).expect("checkpoint present");

    let capture = match &settings.restart {
        Some(rs) => Some(grid_step(&stepping, rs.time)?),
        None => None,
    };
    let runs = try_map_paths(settings.paths, settings.master_seed, |s| {
        occupation_run(field, f, &settings.x0, domain, stepping, s, &checkpoints, capture)
    })?;
    let exited_before = |k: usize| runs.iter().filter(|r| r.exit_step.is_some_and(|e| e <= k)).count();
    for &(r, _) in iv {
        let k = grid_step(&stepping, r)?;
        if k > 0 && exited_before(k) == runs.len() {
            return Err(Error::Insufficient(format!(
                "every path left the domain before r = {r}; enlarge D or shorten r"
            )));
        }
    }
    let norm_grid = SpaceTimeGrid::from_horizon(
        SpatialGrid::uniform(domain.clone(), settings.norm_nodes)?,
        horizon,
        settings.norm_time_steps + 1,
    )?;
    let f_norm = lqp_norm_fn(|t, x| f(t, x), &norm_grid, settings.p, settings.q)?;
    let delta = settings.delta;
    let mut rows = Vec::with_capacity(iv.len());
    let mut vals = vec![0.0; runs.len()];
    for &(r, s) in iv {
        let (kr, ks) = (cp_index(grid_step(&stepping, r)?), cp_index(grid_step(&stepping, s)?));
        for (v, run) in vals.iter_mut().zip(&runs) {
            *v = run.integrals[ks] - run.integrals[kr];
        }
        let m = MeanEstimate::from_samples(&vals);
        let scale = (s - r).powf(delta) * f_norm;
        let ratio = if m.mean == 0.0 { 0.0 } else { m.mean / scale };
        rows.push(KrylovRow {
            r,
            s,
            lhs: m.mean,
            se: m.se,
            ratio,
            rhs: f64::NAN,
        });
    }
    let c_hat = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let dominated = c_hat.is_finite();
    for row in &mut rows {
        row.rhs = c_hat * (row.s - row.r).powf(delta) * f_norm;
    }
    let positive: Vec<f64> = rows.iter().map(|r| r.ratio).filter(|&r| r > 0.0).collect();
    let ratio_spread = if positive.is_empty() {
        1.0
    } else {
        positive.iter().copied().fold(0.0, f64::max) / positive.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let c_fit = geometric_mean(&positive);
    let all_zero = rows.iter().all(|r| r.lhs == 0.0);
    let fit = if rows.iter().all(|r| r.lhs > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| (r.s - r.r).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.lhs.ln()).collect();
        linear_fit(&xs, &ys)
    } else {
        None
    };
    let delta_hat = fit.map(|f| f.slope);
    let band = fit.map(|f| (f.slope - 2.0 * f.slope_se, f.slope + 2.0 * f.slope_se));
    let exponent_ok = match fit {
        Some(f) => f.slope >= delta - f.slope_se,
        None => all_zero,
    };
    let exited_fraction = exited_before(stepping.steps) as f64 / runs.len() as f64;

    let mut conditional = Vec::new();
    if let Some(rs) = &settings.restart {
        let starts = runs
            .iter()
            .enumerate()
            .filter_map(|(i, run)| run.captured.as_ref().map(|x| (i, x)))
            .take(rs.states);
        for (i, state) in starts {
            let sub_master = StreamSpec::derive_master(settings.master_seed, 1 + i as u64);
            for &(r, s) in iv {
                let len = s - r;
                let sub = TimeStepping::new(rs.time, rs.time + len, settings.dt)?;
                let ints = try_map_paths(rs.paths_per_state, sub_master, |st| {
                    occupation_run(field, f, state, domain, sub, st, &[sub.steps], None)
                        .map(|run| run.integrals[0])
                })?;
                let m = MeanEstimate::from_samples(&ints);
                let scale = len.powf(delta) * f_norm;
                conditional.push(ConditionalCheck {
                    r: rs.time,
                    s: rs.time + len,
                    state: state.clone(),
                    estimate: m.mean,
                    se: m.se,
                    ratio: if m.mean == 0.0 { 0.0 } else { m.mean / scale },
                });
            }
        }
    }
    let c_hat_uniform = conditional.iter().map(|c| c.ratio).fold(c_hat, f64::max);
    Ok(KrylovReport {
        delta,
        f_norm,
        pass: exponent_ok && dominated,
        rows,
        fit,
        delta_hat,
        band,
        c_hat,
        ratio_spread,
        c_fit,
        dominated,
        exited_fraction,
        conditional,
        c_hat_uniform,
    })
}

pub(crate) fn geometric_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
    }
}
