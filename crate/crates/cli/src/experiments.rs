//! One runner per experiment kind. Each returns its tables, a JSON summary
//! and an optional pass flag; estimate failures are data, not errors.

use std::sync::Arc;

use roughsde::geometry::{CoefficientField, VectorMap, MAX_DIM};
use roughsde::lyapunov::{
    explosion_bound, supermartingale_check, verify_lyapunov, LyapunovSpec, SampleRegion,
};
use roughsde::monte_carlo::try_map_paths;
use roughsde::pde::{solve_cauchy_dirichlet, verify_decay_estimates, PdeProblem, SolverSettings};
use roughsde::sde::{euler_maruyama_localized, run_path, simulate_global, TimeStepping};
use roughsde::stats::{ks_critical, ks_two_sample, MeanEstimate};
use roughsde::verify::{
    exponential_moment_check, krylov_check, stability_check, ExpMomentSettings, KrylovSettings, RestartSettings,
    StabilitySettings,
};
use roughsde::zvonkin::{audit_theta_ellipticity, simulate_via_zvonkin, PlanSettings, ZvonkinPlan};
use roughsde::{BoundedDomain, Error, PathSample, Recording, SpaceTimeGrid, SpatialGrid, StreamSpec};
use serde_json::{json, Value};

use crate::config::{Experiment, Functional, LyapunovChoice, Profile, ScenarioConfig};
use crate::output::{num, opt, Table};

/// Produced by one block.
#[derive(Debug, Clone, Default)]
pub struct BlockOutput {
    /// `(suffix, table)`; an empty suffix names the block's main table.
    pub tables: Vec<(String, Table)>,
    pub summary: Value,
    pub pass: Option<bool>,
}

/// Shared inputs of a block.
pub struct Context<'a> {
    pub config: &'a ScenarioConfig,
    pub field: CoefficientField,
    pub domain: BoundedDomain,
    /// Master seed of this block.
    pub seed: u64,
}

type Res<T> = Result<T, Error>;

pub fn run_block(ctx: &Context<'_>, block: &Experiment) -> Res<BlockOutput> {
    match block {
        Experiment::Simulate {
            paths,
            x0,
            dt,
            global,
            recording,
            trajectories,
            ..
        } => simulate(ctx, *paths, x0, dt.unwrap_or(ctx.config.dt), global.as_deref(), *recording, *trajectories),
        Experiment::Pde {
            source,
            mollification,
            monte_carlo,
            decay_times,
            delta,
            ..
        } => pde(ctx, *source, *mollification, monte_carlo.as_ref(), decay_times, *delta),
        Experiment::Zvonkin {
            paths,
            x0,
            nodes,
            pde_dt,
            compare_direct,
            round_trips,
            theta_samples,
            ..
        } => zvonkin(ctx, *paths, x0, *nodes, *pde_dt, *compare_direct, *round_trips, *theta_samples),
        Experiment::Krylov {
            x0,
            intervals,
            test_function,
            p,
            q,
            delta,
            paths,
            dt,
            norm_nodes,
            norm_time_steps,
            restart,
            ..
        } => {
            let d = ctx.field.dim();
            let settings = KrylovSettings {
                x0: x0.clone(),
                dt: dt.unwrap_or(ctx.config.dt),
                intervals: intervals.clone(),
                p: *p,
                q: *q,
                delta: delta.unwrap_or(0.5 - d as f64 / (2.0 * p) - 1.0 / q),
                paths: *paths,
                master_seed: ctx.seed,
                norm_nodes: *norm_nodes,
                norm_time_steps: *norm_time_steps,
                restart: restart.as_ref().map(|r| RestartSettings {
                    time: r.time,
                    states: r.states,
                    paths_per_state: r.paths_per_state,
                }),
            };
            let tf = test_function.clone();
            let rep = krylov_check(&ctx.field, &move |_, x| tf.eval(x), &ctx.domain, &settings)?;
            let mut rows = Table::new(["r", "s", "lhs", "se", "ratio", "rhs"]);
            for r in &rep.rows {
                rows.push(vec![num(r.r), num(r.s), num(r.lhs), num(r.se), num(r.ratio), num(r.rhs)]);
            }
            let mut tables = vec![(String::new(), rows)];
            if !rep.conditional.is_empty() {
                let mut c = Table::new(["r", "s", "state", "estimate", "se", "ratio"]);
                for k in &rep.conditional {
                    c.push(vec![num(k.r), num(k.s), num(k.state[0]), num(k.estimate), num(k.se), num(k.ratio)]);
                }
                tables.push(("conditional".into(), c));
            }
            let mut summary = serde_json::to_value(&rep).map_err(json_err)?;
            strip(&mut summary, &["rows", "conditional"]);
            Ok(BlockOutput {
                tables,
                summary,
                pass: Some(rep.pass),
            })
        }
        Experiment::Stability {
            x0,
            eps,
            p0,
            paths,
            drift_direction,
            diffusion_direction,
            p,
            q,
            dt,
            norm_nodes,
            norm_time_steps,
            ..
        } => {
            let mut table = Table::new([
                "p0",
                "eps",
                "m",
                "m_se",
                "n",
                "ratio",
                "stopped_fraction",
                "immediate_stop_fraction",
            ]);
            let mut summaries = Vec::new();
            let mut pass = true;
            for &order in p0 {
                let settings = StabilitySettings {
                    x0: x0.clone(),
                    horizon: ctx.config.horizon,
                    dt: dt.unwrap_or(ctx.config.dt),
                    eps: eps.clone(),
                    p0: order,
                    paths: *paths,
                    master_seed: ctx.seed,
                    p: *p,
                    q: *q,
                    norm_nodes: *norm_nodes,
                    norm_time_steps: *norm_time_steps,
                    ellipticity_samples: 2048,
                };
                let d = ctx.field.dim();
                let rep = stability_check(
                    &ctx.field,
                    drift_map(*drift_direction, d),
                    diffusion_map(*diffusion_direction, d),
                    &ctx.domain,
                    &settings,
                )?;
                for r in &rep.rows {
                    table.push(vec![
                        num(order),
                        num(r.eps),
                        num(r.m),
                        num(r.m_se),
                        num(r.n),
                        num(r.ratio),
                        num(r.stopped_fraction),
                        num(r.immediate_stop_fraction),
                    ]);
                }
                pass &= rep.pass;
                let mut s = serde_json::to_value(&rep).map_err(json_err)?;
                strip(&mut s, &["rows"]);
                summaries.push(s);
            }
            Ok(BlockOutput {
                tables: vec![(String::new(), table)],
                summary: json!({ "orders": summaries }),
                pass: Some(pass),
            })
        }
        Experiment::Lyapunov {
            x0,
            constant,
            constant_factors,
            region_radius,
            spacing,
            paths,
            schedule,
            explosion_radii,
            check_times,
            dt,
            ..
        } => lyapunov(
            ctx,
            x0,
            *constant,
            constant_factors,
            *region_radius,
            *spacing,
            *paths,
            schedule,
            explosion_radii,
            check_times.as_deref(),
            dt.unwrap_or(ctx.config.dt),
        ),
        Experiment::ExpMoment {
            x0,
            lambdas,
            sizes,
            functional,
            widths,
            dt,
            ..
        } => {
            let mut settings = ExpMomentSettings::new(
                x0.clone(),
                ctx.config.horizon,
                dt.unwrap_or(ctx.config.dt),
                lambdas.clone(),
                ctx.seed,
            );
            settings.sizes = sizes.clone();
            if let Some(w) = widths {
                settings.rho_widths = w.clone();
            }
            let field = ctx.field.clone();
            let f = *functional;
            let beta = move |t: f64, x: &[f64]| match f {
                Functional::Zero => 0.0,
                Functional::One => 1.0,
                Functional::SigmaDerivativeSquared => sigma_derivative_squared(&field, t, x),
            };
            let rep = exponential_moment_check(&ctx.field, &beta, &ctx.domain, &settings)?;
            let mut means = Table::new(["lambda", "admissible", "size", "mean", "se"]);
            for r in &rep.rows {
                for &(n, m, se) in &r.means {
                    means.push(vec![num(r.lambda), r.admissible.to_string(), n.to_string(), num(m), num(se)]);
                }
            }
            let mut rho = Table::new(["width", "sup_rho"]);
            for r in &rep.rho {
                rho.push(vec![num(r.width), num(r.sup_rho)]);
            }
            let summary = serde_json::to_value(&rep).map_err(json_err)?;
            Ok(BlockOutput {
                tables: vec![(String::new(), means), ("rho".into(), rho)],
                summary,
                pass: Some(rep.pass),
            })
        }
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::InvalidParameter(format!("report serialization: {e}"))
}

fn strip(v: &mut Value, keys: &[&str]) {
    if let Value::Object(m) = v {
        for k in keys {
            m.remove(*k);
        }
    }
}

fn drift_map(p: Profile, _d: usize) -> Option<Arc<VectorMap>> {
    (p != Profile::Zero).then(|| {
        Arc::new(move |_: f64, x: &[f64], out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = p.eval(*v);
            }
        }) as Arc<VectorMap>
    })
}

fn diffusion_map(p: Profile, d: usize) -> Option<Arc<VectorMap>> {
    (p != Profile::Zero).then(|| {
        Arc::new(move |_: f64, x: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            for i in 0..d {
                out[i * d + i] = p.eval(x[i]);
            }
        }) as Arc<VectorMap>
    })
}

/// `|d sigma / dx|^2` of a scalar diffusion by central differences.
fn sigma_derivative_squared(field: &CoefficientField, t: f64, x: &[f64]) -> f64 {
    const H: f64 = 1e-5;
    let (mut a, mut b) = ([0.0; 1], [0.0; 1]);
    field.diffusion(t, &[x[0] + H], &mut a);
    field.diffusion(t, &[x[0] - H], &mut b);
    let ds = (a[0] - b[0]) / (2.0 * H);
    ds * ds
}

fn stopped_time(p: &PathSample, horizon: f64) -> f64 {
    p.exit_time.unwrap_or(horizon).min(horizon)
}

fn simulate(
    ctx: &Context<'_>,
    paths: usize,
    x0: &[f64],
    dt: f64,
    global: Option<&[f64]>,
    recording: Recording,
    trajectories: usize,
) -> Res<BlockOutput> {
    let horizon = ctx.config.horizon;
    let d = ctx.field.dim();
    let rec = if trajectories == 0 { Recording::Endpoints } else { recording };
    let coords: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let mut tables = Vec::new();
    let samples: Vec<PathSample>;
    let summary;
    if let Some(schedule) = global {
        let runs = try_map_paths(paths, ctx.seed, |s| {
            simulate_global(&ctx.field, x0, horizon, dt, s, schedule, rec)
        })?;
        let mut headers: Vec<String> = vec!["path".into(), "final_time".into()];
        headers.extend(coords.iter().cloned());
        headers.extend(["escalations", "explosive", "blown_up"].map(String::from));
        headers.extend(schedule.iter().map(|r| format!("tau_{r}")));
        let mut t = Table::new(headers);
        for (i, (p, g)) in runs.iter().enumerate() {
            let mut row = vec![i.to_string(), num(p.final_time())];
            row.extend(p.final_state().iter().map(|v| num(*v)));
            row.extend([g.escalations.to_string(), g.explosive.to_string(), g.blown_up.to_string()]);
            row.extend(g.exit_times.iter().map(|t| opt(*t)));
            t.push(row);
        }
        tables.push((String::new(), t));
        let explosive = runs.iter().filter(|r| r.1.explosive).count();
        let blown = runs.iter().filter(|r| r.1.blown_up).count();
        summary = json!({
            "paths": paths,
            "schedule": schedule,
            "explosive": explosive,
            "explosive_fraction": explosive as f64 / paths as f64,
            "blown_up": blown,
        });
        samples = runs.into_iter().map(|r| r.0).collect();
    } else {
        let runs = try_map_paths(paths, ctx.seed, |s| {
            euler_maruyama_localized(&ctx.field, x0, &ctx.domain, horizon, dt, s, rec)
        })?;
        let mut headers: Vec<String> = vec!["path".into(), "final_time".into()];
        headers.extend(coords.iter().cloned());
        headers.extend(["exited", "exit_time", "blown_up"].map(String::from));
        let mut t = Table::new(headers);
        for (i, p) in runs.iter().enumerate() {
            let mut row = vec![i.to_string(), num(p.final_time())];
            row.extend(p.final_state().iter().map(|v| num(*v)));
            row.extend([p.exited.to_string(), opt(p.exit_time), p.blown_up.to_string()]);
            t.push(row);
        }
        tables.push((String::new(), t));
        let tau: Vec<f64> = runs.iter().map(|p| stopped_time(p, horizon)).collect();
        let tau = MeanEstimate::from_samples(&tau);
        let fin: Vec<f64> = runs.iter().map(|p| p.final_state()[0]).collect();
        let fin = MeanEstimate::from_samples(&fin);
        let exited = runs.iter().filter(|p| p.exited).count();
        summary = json!({
            "paths": paths,
            "exited": exited,
            "exit_fraction": exited as f64 / paths as f64,
            "mean_stopped_time": tau.mean,
            "mean_stopped_time_se": tau.se,
            "mean_final_x0": fin.mean,
            "mean_final_x0_se": fin.se,
        });
        samples = runs;
    }
    if trajectories > 0 {
        let mut headers: Vec<String> = vec!["path".into(), "t".into()];
        headers.extend(coords);
        let mut t = Table::new(headers);
        for (i, p) in samples.iter().take(trajectories).enumerate() {
            for k in 0..p.len() {
                let mut row = vec![i.to_string(), num(p.times[k])];
                row.extend(p.state(k).iter().map(|v| num(*v)));
                t.push(row);
            }
        }
        tables.push(("paths".into(), t));
    }
    Ok(BlockOutput {
        tables,
        summary,
        pass: None,
    })
}

fn pde(
    ctx: &Context<'_>,
    source: f64,
    mollification: usize,
    monte_carlo: Option<&crate::config::MonteCarloSpec>,
    decay_times: &[f64],
    delta: Option<f64>,
) -> Res<BlockOutput> {
    let cfg = ctx.config;
    let grid = SpaceTimeGrid::from_horizon(
        SpatialGrid::uniform(ctx.domain.clone(), cfg.grid.nodes)?,
        cfg.horizon,
        cfg.grid.time_nodes,
    )?;
    let problem = PdeProblem::new(ctx.field.clone(), move |_, _| source).with_mollification(mollification);
    let sol = solve_cauchy_dirichlet(&problem, &grid, &SolverSettings::default())?;
    let space = grid.space();
    let d = space.dim();
    let mut headers: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    headers.push("u".into());
    headers.extend((0..d).map(|i| format!("du{i}")));
    let mut table = Table::new(headers);
    let mut x = vec![0.0; d];
    for n in 0..space.len() {
        space.node_point(n, &mut x);
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.push(num(sol.u.at(0, n, 0)));
        row.extend((0..d).map(|c| num(sol.gradient.at(0, n, c))));
        table.push(row);
    }
    let mut tables = vec![(String::new(), table)];
    let sup_u0 = sol.u.level(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut summary = json!({
        "nodes": cfg.grid.nodes,
        "time_nodes": cfg.grid.time_nodes,
        "max_residual": sol.max_residual(),
        "total_sweeps": sol.sweeps.iter().sum::<usize>(),
        "upwind_count": sol.upwind_count,
        "sup_u0": sup_u0,
    });
    let mut pass = None;
    if let Some(mc) = monte_carlo {
        let value = sol.u.interpolate_scalar(grid.t_start(), &mc.x0)?;
        let stepping = TimeStepping::horizon(cfg.horizon, mc.dt)?;
        let samples = try_map_paths(mc.paths, ctx.seed, |s| {
            // E int_0^{tau ^ T} f dt with constant f.
            let out = run_path(&ctx.field, &mc.x0, &ctx.domain, stepping, s, |_, _, _| {})?;
            let tau = out.exit_step.map_or(cfg.horizon, |k| stepping.time(k));
            Ok(source * tau)
        })?;
        let est = MeanEstimate::from_samples(&samples);
        let z = if est.se > 0.0 { (value - est.mean).abs() / est.se } else { f64::INFINITY };
        let ok = z <= 3.0;
        pass = Some(ok);
        summary["feynman_kac"] = json!({
            "x0": mc.x0,
            "solver_value": value,
            "monte_carlo_mean": est.mean,
            "monte_carlo_se": est.se,
            "z": z,
            "paths": mc.paths,
            "dt": mc.dt,
            "pass": ok,
        });
    }
    if !decay_times.is_empty() {
        let delta = delta.unwrap_or_else(|| ctx.field.regularity().default_delta(d));
        let rep = verify_decay_estimates(&sol, decay_times, delta)?;
        let mut t = Table::new(["t", "gap", "sup_u", "grad_holder"]);
        for p in &rep.points {
            t.push(vec![num(p.t), num(p.gap), num(p.sup_u), num(p.grad_holder)]);
        }
        tables.push(("decay".into(), t));
        let mut s = serde_json::to_value(&rep).map_err(json_err)?;
        strip(&mut s, &["points"]);
        summary["decay"] = s;
    }
    Ok(BlockOutput { tables, summary, pass })
}

#[allow(clippy::too_many_arguments)]
fn zvonkin(
    ctx: &Context<'_>,
    paths: usize,
    x0: &[f64],
    nodes: usize,
    pde_dt: f64,
    compare_direct: bool,
    round_trips: usize,
    theta_samples: usize,
) -> Res<BlockOutput> {
    let cfg = ctx.config;
    let d = ctx.field.dim();
    let plan = ZvonkinPlan::new(&ctx.field, &ctx.domain, cfg.horizon, cfg.dt, &PlanSettings::new(nodes, pde_dt))?;

    // Round trips at random window times and domain points.
    let mut noise = StreamSpec::new(StreamSpec::derive_master(ctx.seed, 0x7269), 0).noise();
    let (mut max_err, mut max_iter) = (0.0f64, 0usize);
    let mut x = [0.0; MAX_DIM];
    let mut y = [0.0; MAX_DIM];
    for _ in 0..round_trips {
        let seg = &plan.segments[noise.index_below(plan.segments.len())];
        let (t0, t1) = seg.bundle.window();
        let t = t0 + (t1 - t0) * noise.uniform();
        for (i, xi) in x[..d].iter_mut().enumerate() {
            let (lo, hi) = (ctx.domain.lo()[i], ctx.domain.hi()[i]);
            *xi = lo + (hi - lo) * noise.uniform();
        }
        seg.bundle.phi(t, &x[..d], &mut y[..d])?;
        let inv = seg.bundle.invert(t, &y[..d])?;
        let err = inv.point(d).iter().zip(&x[..d]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        max_err = max_err.max(err);
        max_iter = max_iter.max(inv.iterations);
    }
    let bundle = &plan.segments[0].bundle;
    let theta = audit_theta_ellipticity(bundle, &ctx.field, theta_samples, ctx.seed)?;
    let audit = bundle.audit().clone();
    let round_trip_ok = max_err <= 1e-10 && max_iter <= 40;

    let via = try_map_paths(paths, ctx.seed, |s| simulate_via_zvonkin(&plan, x0, s, Recording::Endpoints))?;
    let mut table = Table::new(["method", "path", "final_time", "x0", "exited", "exit_time"]);
    for (i, p) in via.iter().enumerate() {
        table.push(vec![
            "zvonkin".into(),
            i.to_string(),
            num(p.final_time()),
            num(p.final_state()[0]),
            p.exited.to_string(),
            opt(p.exit_time),
        ]);
    }
    let mut summary = json!({
        "window_length": plan.window.length,
        "window_sup_grad": plan.window.sup_grad,
        "segments": plan.segments.len(),
        "round_trips": round_trips,
        "round_trip_max_error": max_err,
        "round_trip_max_iterations": max_iter,
        "bi_lipschitz": audit,
        "theta": theta,
    });
    let mut pass = round_trip_ok && audit.violations == 0 && theta.pass;
    if compare_direct {
        let direct_seed = StreamSpec::derive_master(ctx.seed, 1);
        let direct = try_map_paths(paths, direct_seed, |s| {
            euler_maruyama_localized(&ctx.field, x0, &ctx.domain, cfg.horizon, cfg.dt, s, Recording::Endpoints)
        })?;
        for (i, p) in direct.iter().enumerate() {
            table.push(vec![
                "direct".into(),
                i.to_string(),
                num(p.final_time()),
                num(p.final_state()[0]),
                p.exited.to_string(),
                opt(p.exit_time),
            ]);
        }
        let finals = |ps: &[PathSample]| MeanEstimate::from_samples(&ps.iter().map(|p| p.final_state()[0]).collect::<Vec<_>>());
        let (mz, md) = (finals(&via), finals(&direct));
        let z = mz.z_gap(&md);
        let taus = |ps: &[PathSample]| ps.iter().map(|p| stopped_time(p, cfg.horizon)).collect::<Vec<_>>();
        let ks = ks_two_sample(&taus(&via), &taus(&direct));
        let crit = ks_critical(0.01, paths, paths);
        pass &= z <= 3.0 && ks < crit;
        summary["comparison"] = json!({
            "zvonkin_mean": mz.mean,
            "zvonkin_se": mz.se,
            "direct_mean": md.mean,
            "direct_se": md.se,
            "z": z,
            "ks_stopped_time": ks,
            "ks_critical_1pct": crit,
        });
    }
    Ok(BlockOutput {
        tables: vec![(String::new(), table)],
        summary,
        pass: Some(pass),
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[allow(clippy::too_many_arguments)]
fn lyapunov(
    ctx: &Context<'_>,
    x0: &[f64],
    constant: Option<f64>,
    factors: &[f64],
    radius: f64,
    spacing: f64,
    paths: usize,
    schedule: &[f64],
    radii: &[f64],
    check_times: Option<&[f64]>,
    dt: f64,
) -> Res<BlockOutput> {
    let cfg = ctx.config;
    let d = ctx.field.dim();
    let spec = match cfg.lyapunov_function {
        LyapunovChoice::OnePlusQuadratic => LyapunovSpec::quadratic_plus_one(d),
        LyapunovChoice::Quadratic => LyapunovSpec::quadratic(d),
    };
    let times = if ctx.field.is_time_homogeneous() {
        vec![0.0]
    } else {
        (0..=4).map(|k| cfg.horizon * k as f64 / 4.0).collect()
    };
    let region = SampleRegion::cube(d, radius, spacing, times);
    let probe = verify_lyapunov(&ctx.field, &spec, &region, constant.unwrap_or(0.0))?;
    let c = constant.unwrap_or(probe.c_hat);
    let generator = if constant.is_some() {
        probe
    } else {
        verify_lyapunov(&ctx.field, &spec, &region, c)?
    };
    let mut summary = json!({
        "lyapunov_function": spec.label(),
        "generator": generator,
        "constant": c,
    });
    if !c.is_finite() {
        summary["note"] = json!("no finite constant: supermartingale and explosion checks skipped");
        return Ok(BlockOutput {
            tables: vec![],
            summary,
            pass: Some(false),
        });
    }
    let stepping = TimeStepping::horizon(cfg.horizon, dt)?;
    // Default ladder: about 20 grid times, every `step`-th step and the last.
    let step = stepping.steps.div_ceil(20).max(1);
    let mut default_times: Vec<f64> = (1..=stepping.steps / step).map(|k| stepping.time(k * step)).collect();
    if stepping.steps % step != 0 {
        default_times.push(stepping.time(stepping.steps));
    }
    let times = check_times.unwrap_or(&default_times);
    let mut stride = 0;
    for &t in times {
        let k = (t / dt).round() as usize;
        if k == 0 || k > stepping.steps || (stepping.time(k) - t).abs() > 1e-9 * t.max(dt) {
            return Err(Error::InvalidParameter(format!("check time {t} is not a positive grid time")));
        }
        stride = gcd(stride, k);
    }
    let samples = try_map_paths(paths, ctx.seed, |s| {
        simulate_global(&ctx.field, x0, cfg.horizon, dt, s, schedule, Recording::Every(stride))
    })?;
    let (paths_only, reports): (Vec<PathSample>, Vec<_>) = samples.into_iter().unzip();
    let mut sm_table = Table::new(["constant", "t", "mean", "se", "v0", "pass"]);
    let main = supermartingale_check(&paths_only, &spec, c, times)?;
    let mut extra = Vec::new();
    for rep in std::iter::once(&main) {
        for p in &rep.points {
            sm_table.push(vec![num(c), num(p.t), num(p.mean), num(p.se), num(rep.v0), p.pass.to_string()]);
        }
    }
    for &f in factors {
        let rep = supermartingale_check(&paths_only, &spec, f * c, times)?;
        for p in &rep.points {
            sm_table.push(vec![num(f * c), num(p.t), num(p.mean), num(p.se), num(rep.v0), p.pass.to_string()]);
        }
        extra.push(json!({ "factor": f, "constant": f * c, "pass": rep.pass, "violation": !rep.pass }));
    }
    let mut ex_table = Table::new(["radius", "frequency", "bound", "pass"]);
    let mut explosion_ok = true;
    let mut explosion = Vec::new();
    for &r in radii {
        let level = schedule
            .iter()
            .position(|s| *s == r)
            .ok_or_else(|| Error::InvalidParameter(format!("radius {r} is not in the schedule")))?;
        let exits = reports.iter().filter(|g| g.exit_times[level].is_some()).count();
        let freq = exits as f64 / paths as f64;
        let bound = explosion_bound(&spec, c, x0, cfg.horizon, r);
        let ok = freq <= bound;
        explosion_ok &= ok;
        ex_table.push(vec![num(r), num(freq), num(bound), ok.to_string()]);
        explosion.push(json!({ "radius": r, "frequency": freq, "bound": bound, "pass": ok }));
    }
    let pass = generator.pass && main.pass && explosion_ok;
    summary["supermartingale"] = json!({ "pass": main.pass, "paths": paths, "v0": main.v0 });
    summary["supermartingale_factors"] = json!(extra);
    summary["explosion"] = json!(explosion);
    Ok(BlockOutput {
        tables: vec![("supermartingale".into(), sm_table), ("explosion".into(), ex_table)],
        summary,
        pass: Some(pass),
    })
}
