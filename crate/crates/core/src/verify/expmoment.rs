use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CoefficientField, Region};
use crate::monte_carlo::try_map_paths;
use crate::sde::{run_path, TimeStepping};
use crate::stats::{linear_fit, LinearFit, MeanEstimate};
use crate::verify::grid_step;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentSettings {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub lambdas: Vec<f64>,
    /// Increasing sample sizes at which the running mean is read off; the
    /// largest is the number of simulated paths.
    pub sizes: Vec<usize>,
    /// Window widths `h` for `sup_{t - s = h} rho(s, t)`; each must be a
    /// multiple of the smallest, which must be a multiple of `dt`.
    pub rho_widths: Vec<f64>,
    pub master_seed: u64,
}

impl ExpMomentSettings {
    pub fn new(x0: Vec<f64>, horizon: f64, dt: f64, lambdas: Vec<f64>, master_seed: u64) -> Self {
        let widths = (1..=5).map(|k| horizon / f64::from(1u32 << k)).collect();
        Self {
            x0,
            horizon,
            dt,
            lambdas,
            sizes: vec![1_000, 10_000, 100_000],
            rho_widths: widths,
            master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoPoint {
    pub width: f64,
    /// `sup_s E int_{s ^ tau}^{(s + width) ^ tau} beta` over the window grid.
    pub sup_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub lambda: f64,
    /// `lambda < 1 / kappa0_hat`.
    pub admissible: bool,
    /// `(sample size, running mean, standard error)`.
    pub means: Vec<(usize, f64, f64)>,
    /// `|m_last - m_prev| / |m_prev|`.
    pub relative_change: f64,
    pub stabilized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub rho: Vec<RhoPoint>,
    /// Linear fit of `sup rho` against the width; its intercept estimates
    /// the small-window limit.
    pub rho_fit: Option<LinearFit>,
    /// `max(0, intercept)`, or the smallest-width value without a fit.
    pub kappa0_hat: f64,
    /// `1 / kappa0_hat` (infinite when it vanishes).
    pub lambda_limit: f64,
    pub rows: Vec<LambdaRow>,
    /// Every admissible row stabilized.
    pub pass: bool,
}

/// Accepted relative change of the running mean between the last two sizes.
pub const STABILIZATION_TOLERANCE: f64 = 0.1;

/// Estimate `rho(s, t)` and its small-window limit `kappa0`, then the
/// running Monte Carlo means of `exp(lambda int_0^{T ^ tau} beta)`.
pub fn exponential_moment_check<R: Region + ?Sized>(
    field: &CoefficientField,
    beta: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    region: &R,
    settings: &ExpMomentSettings,
) -> Result<ExpMomentReport> {
    let sizes = &settings.sizes;
    if sizes.len() < 2 || sizes[0] < 2 || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "need at least two strictly increasing sample sizes (each >= 2)".into(),
        ));
    }
    if settings.lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidParameter("lambda values must be finite".into()));
    }
    let stepping = TimeStepping::horizon(settings.horizon, settings.dt)?;
    let h_min = settings.rho_widths.iter().copied().fold(f64::INFINITY, f64::min);
    if settings.rho_widths.is_empty() || !(h_min > 0.0) {
        return Err(Error::InvalidParameter("rho widths must be positive".into()));
    }
    let stride = grid_step(&stepping, h_min)?;
    let n_cp = stepping.steps / stride;
    let mut width_steps = Vec::with_capacity(settings.rho_widths.len());
    for &w in &settings.rho_widths {
        let m = (w / h_min).round() as usize;
        if ((m as f64) * h_min - w).abs() > 1e-9 * w || m > n_cp {
            return Err(Error::InvalidParameter(format!(
                "rho width {w} is not a multiple of {h_min} within the horizon"
            )));
        }
        width_steps.push(m);
    }

    let n_paths = *sizes.last().expect("nonempty");
    let runs = try_map_paths(n_paths, settings.master_seed, |stream| {
        let mut acc = 0.0;
        let mut prev = 0.0;
        let mut negative: Option<(f64, f64, Vec<f64>)> = None;
        let mut cps = vec![0.0; n_cp + 1];
        let out = run_path(field, &settings.x0, region, stepping, stream, |k, t, x| {
            let v = beta(t, x);
            if v < 0.0 && negative.is_none() {
                negative = Some((v, t, x.to_vec()));
            }
            if k > 0 {
                acc += 0.5 * stepping.dt * (prev + v);
            }
            prev = v;
            if k % stride == 0 && k / stride <= n_cp {
                cps[k / stride] = acc;
            }
        })?;
        if let Some((v, t, x)) = negative {
            return Err(Error::InvalidParameter(format!(
                "beta = {v} < 0 observed at t = {t}, x = {x:?}"
            )));
        }
        let last = out.steps / stride;
        for c in cps.iter_mut().skip(last + 1) {
            *c = acc;
        }
        Ok((cps, acc))
    })?;

    let n = runs.len() as f64;
    let mean_cp: Vec<f64> = (0..=n_cp).map(|j| runs.iter().map(|r| r.0[j]).sum::<f64>() / n).collect();
    let rho: Vec<RhoPoint> = settings
        .rho_widths
        .iter()
        .zip(&width_steps)
        .map(|(&width, &m)| RhoPoint {
            width,
            sup_rho: (0..=n_cp - m).map(|j| mean_cp[j + m] - mean_cp[j]).fold(0.0, f64::max),
        })
        .collect();
    let rho_fit = {
        let xs: Vec<f64> = rho.iter().map(|r| r.width).collect();
        let ys: Vec<f64> = rho.iter().map(|r| r.sup_rho).collect();
        linear_fit(&xs, &ys)
    };
    let kappa0_hat = match rho_fit {
        Some(f) => f.intercept.max(0.0),
        None => rho
            .iter()
            .min_by(|a, b| a.width.total_cmp(&b.width))
            .map_or(0.0, |r| r.sup_rho),
    };
    let lambda_limit = if kappa0_hat > 0.0 { 1.0 / kappa0_hat } else { f64::INFINITY };

    let rows: Vec<LambdaRow> = settings
        .lambdas
        .iter()
        .map(|&lambda| {
            let vals: Vec<f64> = runs.iter().map(|r| (lambda * r.1).exp()).collect();
            let means: Vec<(usize, f64, f64)> = sizes
                .iter()
                .map(|&s| {
                    let m = MeanEstimate::from_samples(&vals[..s]);
                    (s, m.mean, m.se)
                })
                .collect();
            let (prev, last) = (means[means.len() - 2].1, means[means.len() - 1].1);
            let relative_change = if prev == last { 0.0 } else { (last - prev).abs() / prev.abs() };
            LambdaRow {
                lambda,
                admissible: lambda < lambda_limit,
                means,
                relative_change,
                stabilized: relative_change < STABILIZATION_TOLERANCE,
            }
        })
        .collect();
    let pass = rows.iter().filter(|r| r.admissible).all(|r| r.stabilized);
    Ok(ExpMomentReport {
        rho,
        rho_fit,
        kappa0_hat,
        lambda_limit,
        rows,
        pass,
    })
}
