//! Euler-Maruyama simulation stopped at the first exit from a region,
//! tied pairs driven by one noise sequence, and globalization over growing
//! balls.
//!
//! Exits are detected at grid times only: the recorded exit time is the first
//! grid time whose state lies outside the region. Drifts are evaluated
//! pointwise, discontinuities included. A non-finite state ends the path
//! with `blown_up` set; it is data, not an error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Ball, CoefficientField, Region, MAX_DIM};
use crate::rng::StreamSpec;

/// Which states a [`PathSample`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    /// Every grid time.
    Full,
    /// Every n-th grid time, plus the final state.
    Every(usize),
    /// Initial and final state only.
    Endpoints,
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major, `dim` values per recorded time.
    pub states: Vec<f64>,
    pub exit_time: Option<f64>,
    pub exited: bool,
    pub blown_up: bool,
    pub stream: StreamSpec,
    pub dt: f64,
    /// Euler steps actually taken.
    pub steps: usize,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("path has at least its initial state")
    }

    /// `(t ^ tau, X_{t ^ tau})` for the stopped path, or `None` if `t` falls
    /// between recorded times before the path ended.
    pub fn stopped_at(&self, t: f64) -> Option<(f64, &[f64])> {
        let last = self.final_time();
        if t >= last - 1e-9 * self.dt {
            return Some((last, self.final_state()));
        }
        let tol = 1e-6 * self.dt;
        let i = self.times.partition_point(|&s| s < t - tol);
        if i < self.len() && (self.times[i] - t).abs() <= tol {
            Some((self.times[i], self.state(i)))
        } else {
            None
        }
    }
}

/// Uniform stepping `t_k = t_start + k dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStepping {
    pub t_start: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeStepping {
    /// Requires `dt` to divide `t_end - t_start` up to rounding.
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let span = t_end - t_start;
        if !(span > 0.0 && span.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        let steps = (span / dt).round();
        if (steps * dt - span).abs() > 1e-9 * span.max(1.0) || steps < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} does not divide the interval length {span}"
            )));
        }
        Ok(Self {
            t_start,
            dt,
            steps: steps as usize,
        })
    }

    pub fn horizon(t_end: f64, dt: f64) -> Result<Self> {
        Self::new(0.0, t_end, dt)
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }
}

/// `out = x + drift dt + diff (sqrt(dt) xi)`, `diff` row-major d x d.
#[inline]
pub(crate) fn em_step(
    x: &[f64],
    drift: &[f64],
    diff: &[f64],
    dt: f64,
    sqrt_dt: f64,
    xi: &[f64],
    out: &mut [f64],
) {
    let d = x.len();
    if d == 1 {
        out[0] = x[0] + drift[0] * dt + diff[0] * (sqrt_dt * xi[0]);
        return;
    }
    for i in 0..d {
        let mut v = x[i] + drift[i] * dt;
        for j in 0..d {
            v += diff[i * d + j] * (sqrt_dt * xi[j]);
        }
        out[i] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathOutcome {
    pub steps: usize,
    /// Index of the first state observed outside the region.
    pub exit_step: Option<usize>,
    pub blown_up: bool,
}

fn check_start<R: Region + ?Sized>(field: &CoefficientField, x0: &[f64], region: &R) -> Result<()> {
    if x0.len() != field.dim() || region.dim() != field.dim() {
        return Err(Error::InvalidParameter(format!(
            "dimensions disagree: x0 {}, field {}, region {}",
            x0.len(),
            field.dim(),
            region.dim()
        )));
    }
    if !region.contains(x0) {
        return Err(Error::InvalidParameter(format!(
            "initial point {x0:?} lies outside the domain"
        )));
    }
    Ok(())
}

/// Run one stopped Euler-Maruyama path, calling `observe(k, t_k, X_k)` for
/// the initial state and every new state, the exit state included.
pub fn run_path<R, F>(
    field: &CoefficientField,
    x0: &[f64],
    region: &R,
    stepping: TimeStepping,
    stream: StreamSpec,
    mut observe: F,
) -> Result<PathOutcome>
where
    R: Region + ?Sized,
    F: FnMut(usize, f64, &[f64]),
{
    check_start(field, x0, region)?;
    let d = field.dim();
    let mut noise = stream.noise();
    let mut x = [0.0; MAX_DIM];
    let mut next = [0.0; MAX_DIM];
    let mut b = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM * MAX_DIM];
    let mut xi = [0.0; MAX_DIM];
    x[..d].copy_from_slice(x0);
    let dt = stepping.dt;
    let sqrt_dt = dt.sqrt();
    observe(0, stepping.t_start, &x[..d]);
    for k in 0..stepping.steps {
        let t = stepping.time(k);
        field.drift(t, &x[..d], &mut b[..d]);
        field.diffusion(t, &x[..d], &mut s[..d * d]);
        noise.fill_normal(&mut xi[..d]);
        em_step(&x[..d], &b[..d], &s[..d * d], dt, sqrt_dt, &xi[..d], &mut next[..d]);
        x[..d].copy_from_slice(&next[..d]);
        observe(k + 1, stepping.time(k + 1), &x[..d]);
        if x[..d].iter().any(|v| !v.is_finite()) {
            return Ok(PathOutcome {
                steps: k + 1,
                exit_step: None,
                blown_up: true,
            });
        }
        if !region.contains(&x[..d]) {
            return Ok(PathOutcome {
                steps: k + 1,
                exit_step: Some(k + 1),
                blown_up: false,
            });
        }
    }
    Ok(PathOutcome {
        steps: stepping.steps,
        exit_step: None,
        blown_up: false,
    })
}

pub(crate) struct Recorder {
    mode: Recording,
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    last_k: Option<usize>,
    pending: Option<(usize, f64)>,
    pending_state: Vec<f64>,
}

impl Recorder {
    pub(crate) fn new(mode: Recording, dim: usize) -> Self {
        Self {
            mode,
            dim,
            times: Vec::new(),
            states: Vec::new(),
            last_k: None,
            pending: None,
            pending_state: vec![0.0; dim],
        }
    }

    pub(crate) fn observe(&mut self, k: usize, t: f64, x: &[f64]) {
        let keep = match self.mode {
            Recording::Full => true,
            Recording::Every(n) => k.is_multiple_of(n.max(1)),
            Recording::Endpoints => k == 0,
        };
        if keep {
            self.times.push(t);
            self.states.extend_from_slice(x);
            self.last_k = Some(k);
            self.pending = None;
        } else {
            self.pending = Some((k, t));
            self.pending_state.copy_from_slice(x);
        }
    }

    pub(crate) fn finish(
        mut self,
        outcome_exit: Option<f64>,
        exited: bool,
        blown_up: bool,
        stream: StreamSpec,
        dt: f64,
        steps: usize,
    ) -> PathSample {
        if let Some((_, t)) = self.pending.take() {
            self.times.push(t);
            self.states.extend_from_slice(&self.pending_state);
        }
        PathSample {
            dim: self.dim,
            times: self.times,
            states: self.states,
            exit_time: outcome_exit,
            exited,
            blown_up,
            stream,
            dt,
            steps,
        }
    }
}

/// Localized Euler-Maruyama path on `[0, horizon]`, stopped at the first
/// grid time outside `region`.
pub fn euler_maruyama_localized<R: Region + ?Sized>(
    field: &CoefficientField,
    x0: &[f64],
    region: &R,
    horizon: f64,
    dt: f64,
    stream: StreamSpec,
    recording: Recording,
) -> Result<PathSample> {
    let stepping = TimeStepping::horizon(horizon, dt)?;
    let mut rec = Recorder::new(recording, field.dim());
    let out = run_path(field, x0, region, stepping, stream, |k, t, x| rec.observe(k, t, x))?;
    let exit_time = out.exit_step.map(|k| stepping.time(k));
    Ok(rec.finish(exit_time, out.exit_step.is_some(), out.blown_up, stream, dt, out.steps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairOutcome {
    pub steps: usize,
    /// First index at which either path is outside the region (or blew up).
    pub stop_step: Option<usize>,
    pub first_outside: bool,
    pub second_outside: bool,
    pub first_blown_up: bool,
    pub second_blown_up: bool,
}

/// Two paths driven by the same increments, stopped jointly when either
/// leaves the region. `observe(k, t, X_k, X'_k)`.
#[allow(clippy::too_many_arguments)]
pub fn run_tied_pair<R, F>(
    first: &CoefficientField,
    second: &CoefficientField,
    x0: &[f64],
    region: &R,
    stepping: TimeStepping,
    stream: StreamSpec,
    mut observe: F,
) -> Result<PairOutcome>
where
    R: Region + ?Sized,
    F: FnMut(usize, f64, &[f64], &[f64]),
{
    check_start(first, x0, region)?;
    check_start(second, x0, region)?;
    let d = first.dim();
    let mut noise = stream.noise();
    let (mut xa, mut xb) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
    let mut next = [0.0; MAX_DIM];
    let mut b = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM * MAX_DIM];
    let mut xi = [0.0; MAX_DIM];
    xa[..d].copy_from_slice(x0);
    xb[..d].copy_from_slice(x0);
    let dt = stepping.dt;
    let sqrt_dt = dt.sqrt();
    observe(0, stepping.t_start, &xa[..d], &xb[..d]);
    for k in 0..stepping.steps {
        let t = stepping.time(k);
        noise.fill_normal(&mut xi[..d]);
        first.drift(t, &xa[..d], &mut b[..d]);
        first.diffusion(t, &xa[..d], &mut s[..d * d]);
        em_step(&xa[..d], &b[..d], &s[..d * d], dt, sqrt_dt, &xi[..d], &mut next[..d]);
        xa[..d].copy_from_slice(&next[..d]);
        second.drift(t, &xb[..d], &mut b[..d]);
        second.diffusion(t, &xb[..d], &mut s[..d * d]);
        em_step(&xb[..d], &b[..d], &s[..d * d], dt, sqrt_dt, &xi[..d], &mut next[..d]);
        xb[..d].copy_from_slice(&next[..d]);
        observe(k + 1, stepping.time(k + 1), &xa[..d], &xb[..d]);
        let blow_a = xa[..d].iter().any(|v| !v.is_finite());
        let blow_b = xb[..d].iter().any(|v| !v.is_finite());
        let out_a = !blow_a && !region.contains(&xa[..d]);
        let out_b = !blow_b && !region.contains(&xb[..d]);
        if blow_a || blow_b || out_a || out_b {
            return Ok(PairOutcome {
                steps: k + 1,
                stop_step: Some(k + 1),
                first_outside: out_a,
                second_outside: out_b,
                first_blown_up: blow_a,
                second_blown_up: blow_b,
            });
        }
    }
    Ok(PairOutcome {
        steps: stepping.steps,
        stop_step: None,
        first_outside: false,
        second_outside: false,
        first_blown_up: false,
        second_blown_up: false,
    })
}

/// Tied pair with recorded paths. Each path's `exited` flag says whether it
/// was itself outside at the joint stopping time.
#[derive(Debug, Clone, PartialEq)]
pub struct TiedPair {
    pub first: PathSample,
    pub second: PathSample,
    pub stop_time: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_tied_pair<R: Region + ?Sized>(
    first: &CoefficientField,
    second: &CoefficientField,
    x0: &[f64],
    region: &R,
    horizon: f64,
    dt: f64,
    stream: StreamSpec,
    recording: Recording,
) -> Result<TiedPair> {
    let stepping = TimeStepping::horizon(horizon, dt)?;
    let mut ra = Recorder::new(recording, first.dim());
    let mut rb = Recorder::new(recording, first.dim());
    let out = run_tied_pair(first, second, x0, region, stepping, stream, |k, t, a, b| {
        ra.observe(k, t, a);
        rb.observe(k, t, b);
    })?;
    let stop_time = out.stop_step.map(|k| stepping.time(k));
    let first = ra.finish(
        stop_time.filter(|_| out.first_outside),
        out.first_outside,
        out.first_blown_up,
        stream,
        dt,
        out.steps,
    );
    let second = rb.finish(
        stop_time.filter(|_| out.second_outside),
        out.second_outside,
        out.second_blown_up,
        stream,
        dt,
        out.steps,
    );
    Ok(TiedPair {
        first,
        second,
        stop_time,
    })
}

/// Exit times from the nested balls `D_R` of a globalized path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalizationReport {
    pub schedule: Vec<f64>,
    /// `tau_R` per radius; `None` if the path stayed inside `D_R` up to the horizon.
    pub exit_times: Vec<Option<f64>>,
    /// Number of balls the path left before the horizon.
    pub escalations: usize,
    /// The schedule was exhausted (or the state overflowed) before the horizon.
    pub explosive: bool,
    pub blown_up: bool,
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidParameter("radius schedule is empty".into()));
    }
    if !(schedule[0] > 0.0) || schedule.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(format!(
            "radius schedule must be positive and strictly increasing, got {schedule:?}"
        )));
    }
    Ok(())
}

/// Run one path over the balls `D_{R_1} subset D_{R_2} subset ...`: on leaving
/// `D_{R_i}` the same path continues on `D_{R_{i+1}}` with the same state and
/// stream. Leaving the last ball before the horizon flags a potential explosion.
#[allow(clippy::too_many_arguments)]
pub fn run_global<F>(
    field: &CoefficientField,
    x0: &[f64],
    stepping: TimeStepping,
    stream: StreamSpec,
    schedule: &[f64],
    mut observe: F,
) -> Result<(PathOutcome, GlobalizationReport)>
where
    F: FnMut(usize, f64, &[f64]),
{
    check_schedule(schedule)?;
    let d = field.dim();
    let inner = Ball::new(d, schedule[0])?;
    if x0.len() != d || !inner.contains(x0) {
        return Err(Error::InvalidParameter(format!(
            "initial point {x0:?} must lie inside the first ball (radius {})",
            schedule[0]
        )));
    }
    let outer = Ball::new(d, *schedule.last().unwrap())?;
    let r2: Vec<f64> = schedule.iter().map(|r| r * r).collect();
    let mut exit_times: Vec<Option<f64>> = vec![None; schedule.len()];
    let mut level = 0;
    let out = run_path(field, x0, &outer, stepping, stream, |k, t, x| {
        observe(k, t, x);
        let n2: f64 = x.iter().map(|v| v * v).sum();
        while level < r2.len() && !(n2 < r2[level]) {
            exit_times[level] = Some(t);
            level += 1;
        }
    })?;
    let report = GlobalizationReport {
        schedule: schedule.to_vec(),
        escalations: exit_times.iter().filter(|t| t.is_some()).count(),
        exit_times,
        explosive: out.exit_step.is_some() || out.blown_up,
        blown_up: out.blown_up,
    };
    Ok((out, report))
}

pub fn simulate_global(
    field: &CoefficientField,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    stream: StreamSpec,
    schedule: &[f64],
    recording: Recording,
) -> Result<(PathSample, GlobalizationReport)> {
    let stepping = TimeStepping::horizon(horizon, dt)?;
    let mut rec = Recorder::new(recording, field.dim());
    let (out, report) = run_global(field, x0, stepping, stream, schedule, |k, t, x| {
        rec.observe(k, t, x)
    })?;
    let exit_time = out.exit_step.map(|k| stepping.time(k));
    let path = rec.finish(exit_time, out.exit_step.is_some(), out.blown_up, stream, dt, out.steps);
    Ok((path, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundedDomain, Regularity, WholeSpace};

    fn reg() -> Regularity {
        Regularity::new(2.0, 1.0, 4.0, 4.0).unwrap()
    }

    #[test]
    fn frozen_path_without_coefficients() {
        let f = CoefficientField::scalar(|_, _| 0.0, |_, _| 0.0, reg());
        let d = BoundedDomain::interval(-1.0, 1.0).unwrap();
        let p = euler_maruyama_localized(&f, &[0.3], &d, 1.0, 0.01, StreamSpec::new(1, 0), Recording::Full)
            .unwrap();
        assert!(!p.exited);
        assert_eq!(p.len(), 101);
        assert!(p.states.iter().all(|&x| x == 0.3));
        for (i, t) in p.times.iter().enumerate() {
            assert!((t - i as f64 * 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn exit_state_is_first_outside() {
        let f = CoefficientField::scalar(|_, _| 0.0, |_, _| 1.0, reg());
        let d = BoundedDomain::interval(-0.2, 0.2).unwrap();
        let p = euler_maruyama_localized(&f, &[0.0], &d, 5.0, 0.01, StreamSpec::new(3, 9), Recording::Full)
            .unwrap();
        assert!(p.exited);
        let n = p.len();
        assert!(!d.contains(p.final_state()));
        for i in 0..n - 1 {
            assert!(d.contains(p.state(i)));
        }
        assert_eq!(p.exit_time, Some(p.final_time()));
    }

    #[test]
    fn recording_modes_agree_on_endpoints() {
        let f = CoefficientField::scalar(|_, x| -x, |_, _| 0.7, reg());
        let d = WholeSpace { dim: 1 };
        let full = euler_maruyama_localized(&f, &[1.0], &d, 1.0, 0.01, StreamSpec::new(5, 2), Recording::Full)
            .unwrap();
        let ends = euler_maruyama_localized(&f, &[1.0], &d, 1.0, 0.01, StreamSpec::new(5, 2), Recording::Endpoints)
            .unwrap();
        let every = euler_maruyama_localized(&f, &[1.0], &d, 1.0, 0.01, StreamSpec::new(5, 2), Recording::Every(7))
            .unwrap();
        assert_eq!(ends.len(), 2);
        assert_eq!(ends.final_state(), full.final_state());
        assert_eq!(every.final_state(), full.final_state());
        assert_eq!(every.state(3), full.state(21));
    }

    #[test]
    fn dt_must_divide_horizon() {
        assert!(TimeStepping::horizon(1.0, 0.3).is_err());
        assert_eq!(TimeStepping::horizon(1.0, 1e-3).unwrap().steps, 1000);
    }

    #[test]
    fn start_outside_domain_is_an_error() {
        let f = CoefficientField::scalar(|_, _| 0.0, |_, _| 1.0, reg());
        let d = BoundedDomain::interval(0.0, 1.0).unwrap();
        assert!(euler_maruyama_localized(&f, &[2.0], &d, 1.0, 0.1, StreamSpec::new(0, 0), Recording::Full).is_err());
    }

    #[test]
    fn overflow_is_flagged_not_raised() {
        let f = CoefficientField::scalar(|_, x| x * x * x * 1e3, |_, _| 0.0, reg());
        let p = euler_maruyama_localized(&f, &[10.0], &WholeSpace { dim: 1 }, 1.0, 0.01, StreamSpec::new(0, 0), Recording::Endpoints)
            .unwrap();
        assert!(p.blown_up);
        assert!(!p.exited);
    }

    #[test]
    fn tied_pair_of_identical_fields_is_identical() {
        let f = CoefficientField::scalar(|_, x| if x < 0.0 { 1.0 } else { -1.0 }, |_, _| 1.0, reg());
        let d = BoundedDomain::interval(-2.0, 2.0).unwrap();
        let pair = simulate_tied_pair(&f, &f, &[0.1], &d, 1.0, 1e-3, StreamSpec::new(4, 4), Recording::Full).unwrap();
        assert_eq!(pair.first.states, pair.second.states);
    }

    #[test]
    fn global_schedule_validation() {
        let f = CoefficientField::scalar(|_, _| 0.0, |_, _| 1.0, reg());
        let s = StreamSpec::new(0, 0);
        assert!(simulate_global(&f, &[0.0], 1.0, 0.1, s, &[2.0, 1.0], Recording::Endpoints).is_err());
        assert!(simulate_global(&f, &[5.0], 1.0, 0.1, s, &[2.0, 10.0], Recording::Endpoints).is_err());
        assert!(simulate_global(&f, &[0.0], 1.0, 0.1, s, &[], Recording::Endpoints).is_err());
    }

    #[test]
    fn bounded_motion_never_escalates() {
        // |b| <= 1, no noise: |X_t| <= 1 + t stays in the first ball
        let f = CoefficientField::scalar(|_, x| -x.signum(), |_, _| 0.0, reg());
        let (p, rep) = simulate_global(&f, &[0.5], 2.0, 0.01, StreamSpec::new(0, 0), &[4.0, 8.0], Recording::Endpoints)
            .unwrap();
        assert_eq!(rep.escalations, 0);
        assert!(!rep.explosive && !p.exited);
    }
}
