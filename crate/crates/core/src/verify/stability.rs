use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    check_integrability, ellipticity_check, lqp_norm_fn, BoundedDomain, CoefficientField, SpaceTimeGrid,
    SpatialGrid, Usage, VectorMap, MAX_DIM,
};
use crate::monte_carlo::try_map_paths;
use crate::sde::{run_tied_pair, TimeStepping};
use crate::stats::{linear_fit, LinearFit, MeanEstimate};
use crate::verify::krylov::geometric_mean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySettings {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    /// Perturbation sizes; `0` is allowed and must give `M = 0` exactly.
    pub eps: Vec<f64>,
    /// Moment order of the sup-distance.
    pub p0: f64,
    pub paths: usize,
    pub master_seed: u64,
    /// Integrability exponents of the perturbation norm.
    pub p: f64,
    pub q: f64,
    pub norm_nodes: usize,
    pub norm_time_steps: usize,
    /// Space-time nodes scanned for ellipticity of each perturbed field.
    pub ellipticity_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub eps: f64,
    /// `E sup_{t <= T ^ tau} |X_t - X'_t|^{p0}`.
    pub m: f64,
    pub m_se: f64,
    /// `(||eps h_b|| + ||eps h_sigma||)^{p0}`.
    pub n: f64,
    /// `m / n` (0 when both vanish).
    pub ratio: f64,
    /// Fraction of pairs stopped at the first step.
    pub immediate_stop_fraction: f64,
    /// Fraction of pairs stopped before the horizon.
    pub stopped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub p0: f64,
    /// `||h_b||` and `||h_sigma||` (Frobenius) in `L^q_p((0, T) x D)`.
    pub drift_direction_norm: f64,
    pub diffusion_direction_norm: f64,
    pub rows: Vec<StabilityRow>,
    /// `log m` against `log n` over the rows with `m > 0`.
    pub fit: Option<LinearFit>,
    pub slope: Option<f64>,
    /// Smallest constant with `m <= C n` on the ladder.
    pub c_hat: f64,
    pub ratio_spread: f64,
    /// Least-squares constant with the exponent held fixed:
    /// `exp(mean log ratio)` over the positive ratios.
    pub c_fit: f64,
    /// `m` nondecreasing in `eps` up to three combined standard errors.
    pub monotone: bool,
    pub pass: bool,
}

/// Accepted band for the fitted slope of `log M` against `log N`.
pub const STABILITY_SLOPE_BAND: (f64, f64) = (0.8, 1.2);

/// Compare tied pairs driven by `(b, sigma)` and
/// `(b + eps h_b, sigma + eps h_sigma)` on the `eps` ladder.
pub fn stability_check(
    base: &CoefficientField,
    drift_direction: Option<Arc<VectorMap>>,
    diffusion_direction: Option<Arc<VectorMap>>,
    domain: &BoundedDomain,
    settings: &StabilitySettings,
) -> Result<StabilityReport> {
    let d = base.dim();
    check_integrability(d, settings.p, settings.q, Usage::Transform)?;
    if drift_direction.is_none() && diffusion_direction.is_none() {
        return Err(Error::InvalidParameter("no perturbation direction given".into()));
    }
    if settings.eps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::InvalidParameter("perturbation sizes must be finite and nonnegative".into()));
    }
    if !(settings.p0 > 0.0 && settings.p0.is_finite()) {
        return Err(Error::InvalidParameter(format!("moment order p0 = {} must be positive", settings.p0)));
    }
    if settings.paths < 2 {
        return Err(Error::InvalidParameter("need at least two pairs".into()));
    }
    let stepping = TimeStepping::horizon(settings.horizon, settings.dt)?;
    let norm_grid = SpaceTimeGrid::from_horizon(
        SpatialGrid::uniform(domain.clone(), settings.norm_nodes)?,
        settings.horizon,
        settings.norm_time_steps + 1,
    )?;
    let direction_norm = |h: &Option<Arc<VectorMap>>, len: usize| -> Result<f64> {
        match h {
            None => Ok(0.0),
            Some(h) => lqp_norm_fn(
                |t, x| {
                    let mut buf = [0.0; MAX_DIM * MAX_DIM];
                    h(t, x, &mut buf[..len]);
                    buf[..len].iter().map(|v| v * v).sum::<f64>().sqrt()
                },
                &norm_grid,
                settings.p,
                settings.q,
            ),
        }
    };
    let hb = direction_norm(&drift_direction, d)?;
    let hs = direction_norm(&diffusion_direction, d * d)?;

    let mut rows = Vec::with_capacity(settings.eps.len());
    for &eps in &settings.eps {
        let other = if eps == 0.0 {
            base.clone()
        } else {
            base.perturbed(drift_direction.clone(), diffusion_direction.clone(), eps)
        };
        let ell = ellipticity_check(&other, &norm_grid, settings.ellipticity_samples)?;
        if !ell.pass {
            return Err(Error::Ellipticity(format!(
                "perturbed field at eps = {eps} has eigenvalue {} at t = {}, x = {:?} (kappa = {})",
                ell.worst_eigenvalue, ell.worst_time, ell.worst_point, ell.kappa
            )));
        }
        let pairs = try_map_paths(settings.paths, settings.master_seed, |stream| {
            let mut sup: f64 = 0.0;
            let out = run_tied_pair(base, &other, &settings.x0, domain, stepping, stream, |_, _, a, b| {
                let dist = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                sup = sup.max(dist);
            })?;
            Ok((sup.powf(settings.p0), out.stop_step))
        })?;
        let immediate = pairs.iter().filter(|p| p.1 == Some(1)).count() as f64 / pairs.len() as f64;
        if immediate > 0.5 {
            return Err(Error::Insufficient(format!(
                "{:.0}% of pairs stop at the first step at eps = {eps}; start farther from the boundary",
                100.0 * immediate
            )));
        }
        let stopped = pairs.iter().filter(|p| p.1.is_some()).count() as f64 / pairs.len() as f64;
        let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let m = MeanEstimate::from_samples(&vals);
        let n = (eps * hb + eps * hs).powf(settings.p0);
        let ratio = if m.mean == 0.0 { 0.0 } else { m.mean / n };
        rows.push(StabilityRow {
            eps,
            m: m.mean,
            m_se: m.se,
            n,
            ratio,
            immediate_stop_fraction: immediate,
            stopped_fraction: stopped,
        });
    }

    let c_hat = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let positive: Vec<&StabilityRow> = rows.iter().filter(|r| r.m > 0.0 && r.n > 0.0).collect();
    let ratio_spread = if positive.is_empty() {
        1.0
    } else {
        let hi = positive.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let lo = positive.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        hi / lo
    };
    let c_fit = geometric_mean(&positive.iter().map(|r| r.ratio).collect::<Vec<_>>());
    let fit = {
        let xs: Vec<f64> = positive.iter().map(|r| r.n.ln()).collect();
        let ys: Vec<f64> = positive.iter().map(|r| r.m.ln()).collect();
        linear_fit(&xs, &ys)
    };
    let slope = fit.map(|f| f.slope);
    let mut sorted: Vec<&StabilityRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let monotone = sorted
        .windows(2)
        .all(|w| w[1].m >= w[0].m - 3.0 * (w[0].m_se.powi(2) + w[1].m_se.powi(2)).sqrt());
    let in_band = slope.is_some_and(|s| (STABILITY_SLOPE_BAND.0..=STABILITY_SLOPE_BAND.1).contains(&s));
    Ok(StabilityReport {
        p0: settings.p0,
        drift_direction_norm: hb,
        diffusion_direction_norm: hs,
        pass: in_band && c_hat.is_finite(),
        rows,
        fit,
        slope,
        c_hat,
        ratio_spread,
        c_fit,
        monotone,
    })
}
