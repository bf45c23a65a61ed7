//! Lyapunov certificates `L_t V <= C V` for non-explosion, with
//! `L_t = d_t + b . grad + (1/2) tr(sigma sigma^T D^2)`.
//!
//! Derivatives of `V` are supplied by the caller. The default certificate is
//! `V = 1 + |x|^2`: with non-degenerate noise `L_t |x|^2 = tr(a) > 0` at the
//! origin where `|x|^2` vanishes, so the plain square fails `L_t V <= C V`
//! there for every `C`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{CoefficientField, MAX_DIM};
use crate::rng::StreamSpec;
use crate::sde::PathSample;
use crate::stats::MeanEstimate;

pub type ScalarFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
pub type ArrayFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
pub type RadialFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A candidate `V` with its derivatives.
#[derive(Clone)]
pub struct LyapunovSpec {
    dim: usize,
    value: Arc<ScalarFn>,
    time_derivative: Arc<ScalarFn>,
    gradient: Arc<ArrayFn>,
    /// Row-major `d x d`.
    hessian: Arc<ArrayFn>,
    /// Exact `inf_{t, |x| = R} V(t, x)` if known.
    radial_infimum: Option<Arc<RadialFn>>,
    label: String,
}

impl fmt::Debug for LyapunovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovSpec")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("analytic_radial_infimum", &self.radial_infimum.is_some())
            .finish()
    }
}

impl LyapunovSpec {
    pub fn new(
        dim: usize,
        value: Arc<ScalarFn>,
        time_derivative: Arc<ScalarFn>,
        gradient: Arc<ArrayFn>,
        hessian: Arc<ArrayFn>,
    ) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Self {
            dim,
            value,
            time_derivative,
            gradient,
            hessian,
            radial_infimum: None,
            label: "V".into(),
        }
    }

    pub fn with_radial_infimum(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.radial_infimum = Some(Arc::new(f));
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `V = offset + |x|^2`.
    fn shifted_square(dim: usize, offset: f64) -> Self {
        Self::new(
            dim,
            Arc::new(move |_, x| offset + x.iter().map(|v| v * v).sum::<f64>()),
            Arc::new(|_, _| 0.0),
            Arc::new(|_, x, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 2.0 * v;
                }
            }),
            Arc::new(move |_, _, out| {
                out.fill(0.0);
                for i in 0..dim {
                    out[i * dim + i] = 2.0;
                }
            }),
        )
        .with_radial_infimum(move |r| offset + r * r)
    }

    /// `V = 1 + |x|^2`.
    pub fn quadratic_plus_one(dim: usize) -> Self {
        Self::shifted_square(dim, 1.0).with_label("1+|x|^2")
    }

    /// `V = |x|^2`.
    pub fn quadratic(dim: usize) -> Self {
        Self::shifted_square(dim, 0.0).with_label("|x|^2")
    }

    /// `V_1 + V_2` with summed derivatives.
    pub fn sum(&self, other: &LyapunovSpec) -> Self {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        let (a3, b3) = (self.clone(), other.clone());
        let (a4, b4) = (self.clone(), other.clone());
        let mut out = Self::new(
            d,
            Arc::new(move |t, x| (a.value)(t, x) + (b.value)(t, x)),
            Arc::new(move |t, x| (a2.time_derivative)(t, x) + (b2.time_derivative)(t, x)),
            Arc::new(move |t, x, out| {
                let mut tmp = [0.0; MAX_DIM];
                (a3.gradient)(t, x, out);
                (b3.gradient)(t, x, &mut tmp[..d]);
                for (o, v) in out.iter_mut().zip(&tmp) {
                    *o += v;
                }
            }),
            Arc::new(move |t, x, out| {
                let mut tmp = [0.0; MAX_DIM * MAX_DIM];
                (a4.hessian)(t, x, out);
                (b4.hessian)(t, x, &mut tmp[..d * d]);
                for (o, v) in out.iter_mut().zip(&tmp) {
                    *o += v;
                }
            }),
        );
        if let (Some(ra), Some(rb)) = (&self.radial_infimum, &other.radial_infimum) {
            // inf of a sum is at least the sum of infima; exact for radial V
            let (ra, rb) = (Arc::clone(ra), Arc::clone(rb));
            out.radial_infimum = Some(Arc::new(move |r| ra(r) + rb(r)));
        }
        out.label = format!("{}+{}", self.label, other.label);
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        (self.value)(t, x)
    }

    pub fn has_analytic_radial_infimum(&self) -> bool {
        self.radial_infimum.is_some()
    }

    /// `inf_{0 <= t <= horizon, |x| = r} V(t, x)`: the analytic form when
    /// supplied, otherwise the minimum over a dense sampling of the sphere
    /// (exact points in 1-D, 720 angles in 2-D, 8192 fixed pseudo-random
    /// directions beyond) at 17 times.
    pub fn radial_infimum(&self, r: f64, horizon: f64) -> f64 {
        if let Some(f) = &self.radial_infimum {
            return f(r);
        }
        let d = self.dim;
        let times: Vec<f64> = (0..17).map(|k| horizon * k as f64 / 16.0).collect();
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        match d {
            1 => dirs.extend([vec![1.0], vec![-1.0]]),
            2 => dirs.extend((0..720).map(|k| {
                let a = 2.0 * PI * k as f64 / 720.0;
                vec![a.cos(), a.sin()]
            })),
            _ => {
                let mut noise = StreamSpec::new(0x5a11_d1e5, d as u64).noise();
                for _ in 0..8192 {
                    let mut v = vec![0.0; d];
                    noise.fill_normal(&mut v);
                    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    dirs.push(v.iter().map(|c| c / n).collect());
                }
            }
        }
        let mut x = vec![0.0; d];
        let mut best = f64::INFINITY;
        for dir in &dirs {
            for (xi, di) in x.iter_mut().zip(dir) {
                *xi = r * di;
            }
            for &t in &times {
                best = best.min(self.value(t, &x));
            }
        }
        best
    }
}

/// `L_t V(t, x) = d_t V + b . grad V + (1/2) tr(sigma sigma^T D^2 V)`.
pub fn generator_apply(field: &CoefficientField, spec: &LyapunovSpec, t: f64, x: &[f64]) -> Result<f64> {
    let d = field.dim();
    if spec.dim != d || x.len() != d {
        return Err(Error::InvalidParameter(format!(
            "dimensions disagree: field {d}, V {}, point {}",
            spec.dim,
            x.len()
        )));
    }
    let mut b = [0.0; MAX_DIM];
    let mut g = [0.0; MAX_DIM];
    let mut h = [0.0; MAX_DIM * MAX_DIM];
    let mut sig = [0.0; MAX_DIM * MAX_DIM];
    let mut a = [0.0; MAX_DIM * MAX_DIM];
    field.drift(t, x, &mut b[..d]);
    field.covariance(t, x, &mut sig[..d * d], &mut a[..d * d]);
    (spec.gradient)(t, x, &mut g[..d]);
    (spec.hessian)(t, x, &mut h[..d * d]);
    let mut v = (spec.time_derivative)(t, x);
    for i in 0..d {
        v += b[i] * g[i];
    }
    let mut tr = 0.0;
    for i in 0..d {
        for j in 0..d {
            tr += a[i * d + j] * h[j * d + i];
        }
    }
    v += 0.5 * tr;
    ensure_finite(v, || format!("L_t V at t={t}, x={x:?}"))
}

/// Bounded sample set: the lattice `spacing * Z^d` (anchored at the origin,
/// so nested regions share points) inside `[lo, hi]`, at each of `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub spacing: f64,
    pub times: Vec<f64>,
}

impl SampleRegion {
    pub fn cube(dim: usize, radius: f64, spacing: f64, times: Vec<f64>) -> Self {
        Self {
            lo: vec![-radius; dim],
            hi: vec![radius; dim],
            spacing,
            times,
        }
    }

    fn axis_points(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing;
        let first = (self.lo[axis] / h - 1e-9).ceil() as i64;
        let last = (self.hi[axis] / h + 1e-9).floor() as i64;
        (first..=last).map(|k| k as f64 * h).collect()
    }

    /// All lattice points, lexicographic.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.lo.len()).map(|a| self.axis_points(a)).collect();
        let mut out = vec![Vec::new()];
        for ax in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    ax.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub pass: bool,
    pub constant: f64,
    /// `max (L_t V - C V)` over the samples.
    pub worst_margin: f64,
    pub worst_time: f64,
    pub worst_point: Vec<f64>,
    /// Smallest feasible constant on the samples, `max L_t V / V`
    /// (infinite if `V = 0 < L_t V` somewhere).
    pub c_hat: f64,
    pub c_hat_time: f64,
    pub c_hat_point: Vec<f64>,
    /// First sample with `V = 0` and `L_t V > 0`, if any.
    pub degenerate_point: Option<Vec<f64>>,
    pub samples: usize,
}

/// Check `L_t V <= C V` at every sample and report the minimal feasible `C`.
pub fn verify_lyapunov(
    field: &CoefficientField,
    spec: &LyapunovSpec,
    region: &SampleRegion,
    constant: f64,
) -> Result<LyapunovReport> {
    if !(region.spacing > 0.0) || region.times.is_empty() || region.lo.len() != field.dim() {
        return Err(Error::InvalidParameter(
            "sample region needs a positive spacing, at least one time and the field's dimension".into(),
        ));
    }
    let mut rep = LyapunovReport {
        pass: true,
        constant,
        worst_margin: f64::NEG_INFINITY,
        worst_time: f64::NAN,
        worst_point: vec![],
        c_hat: f64::NEG_INFINITY,
        c_hat_time: f64::NAN,
        c_hat_point: vec![],
        degenerate_point: None,
        samples: 0,
    };
    let mut within = true;
    for x in region.points() {
        for &t in &region.times {
            let v = ensure_finite(spec.value(t, &x), || format!("V at t={t}, x={x:?}"))?;
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("V = {v} < 0 at t={t}, x={x:?}")));
            }
            let lv = generator_apply(field, spec, t, &x)?;
            rep.samples += 1;
            let margin = lv - constant * v;
            // Round-off allowance, so that C = C_hat itself passes.
            within &= margin <= 1e-12 * (lv.abs() + (constant * v).abs());
            if margin > rep.worst_margin {
                rep.worst_margin = margin;
                rep.worst_time = t;
                rep.worst_point = x.clone();
            }
            let ratio = if v > 0.0 {
                lv / v
            } else if lv > 0.0 {
                if rep.degenerate_point.is_none() {
                    rep.degenerate_point = Some(x.clone());
                }
                f64::INFINITY
            } else {
                continue;
            };
            if ratio > rep.c_hat {
                rep.c_hat = ratio;
                rep.c_hat_time = t;
                rep.c_hat_point = x.clone();
            }
        }
    }
    rep.pass = within && rep.degenerate_point.is_none();
    Ok(rep)
}

/// `min(1, e^{C N} V(0, x0) / inf_{|x| = R} V)`, the bound on the probability
/// that the path leaves the ball of radius `R` before time `N`.
pub fn explosion_bound(spec: &LyapunovSpec, constant: f64, x0: &[f64], horizon: f64, radius: f64) -> f64 {
    let inf = spec.radial_infimum(radius, horizon);
    if !(inf > 0.0) {
        warn!("radial infimum of V at R = {radius} is {inf}; explosion bound is trivial");
        return 1.0;
    }
    ((constant * horizon).exp() * spec.value(0.0, x0) / inf).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupermartingalePoint {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    pub pass: bool,
    pub constant: f64,
    pub v0: f64,
    pub paths: usize,
    pub points: Vec<SupermartingalePoint>,
}

/// Minimum number of paths for a meaningful check.
pub const SUPERMARTINGALE_MIN_PATHS: usize = 1000;

/// Estimate `m(t) = E e^{-C (t ^ tau)} V(t ^ tau, X_{t ^ tau})` on `times`
/// and require `m(t) <= V(0, x0) + 3 SE` everywhere. All paths must start at
/// the same point and record every ladder time they reach.
pub fn supermartingale_check(
    paths: &[PathSample],
    spec: &LyapunovSpec,
    constant: f64,
    times: &[f64],
) -> Result<SupermartingaleReport> {
    if paths.len() < SUPERMARTINGALE_MIN_PATHS {
        return Err(Error::Insufficient(format!(
            "{} paths given, at least {SUPERMARTINGALE_MIN_PATHS} needed",
            paths.len()
        )));
    }
    let x0 = paths[0].state(0).to_vec();
    if paths.iter().any(|p| p.state(0) != x0.as_slice()) {
        return Err(Error::InvalidParameter("paths start at different points".into()));
    }
    let v0 = spec.value(0.0, &x0);
    let mut points = Vec::with_capacity(times.len());
    let mut vals = vec![0.0; paths.len()];
    for &t in times {
        for (v, p) in vals.iter_mut().zip(paths) {
            let (s, x) = p.stopped_at(t).ok_or_else(|| {
                Error::InvalidParameter(format!("path {} has no recorded state at t={t}", p.stream.path_index))
            })?;
            *v = (-constant * s).exp() * spec.value(s, x);
        }
        let m = MeanEstimate::from_samples(&vals);
        points.push(SupermartingalePoint {
            t,
            mean: m.mean,
            se: m.se,
            pass: m.mean <= v0 + 3.0 * m.se,
        });
    }
    Ok(SupermartingaleReport {
        pass: points.iter().all(|p| p.pass),
        constant,
        v0,
        paths: paths.len(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Regularity;
    use crate::scenarios::ThresholdOu;

    fn reg() -> Regularity {
        Regularity::new(2.0, 1.0, 4.0, 4.0).unwrap()
    }

    #[test]
    fn brownian_generator_is_dimension() {
        let f = CoefficientField::new(
            2,
            Arc::new(|_, _, o: &mut [f64]| o.fill(0.0)),
            Arc::new(|_, _, o: &mut [f64]| o.copy_from_slice(&[1.0, 0.0, 0.0, 1.0])),
            reg(),
        );
        let v = LyapunovSpec::quadratic_plus_one(2);
        assert_eq!(generator_apply(&f, &v, 0.3, &[1.5, -2.0]).unwrap(), 2.0);
        let r = verify_lyapunov(&f, &v, &SampleRegion::cube(2, 2.0, 0.5, vec![0.0]), 2.0).unwrap();
        assert!(r.pass);
        assert_eq!(r.c_hat, 2.0);
        assert_eq!(r.c_hat_point, vec![0.0, 0.0]);
    }

    #[test]
    fn ou_generator_closed_form() {
        let f = CoefficientField::scalar(|_, x| -x, |_, _| 1.0, reg());
        let v = LyapunovSpec::quadratic_plus_one(1);
        for x in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            assert!((generator_apply(&f, &v, 0.0, &[x]).unwrap() - (1.0 - 2.0 * x * x)).abs() < 1e-12);
        }
        let r = verify_lyapunov(&f, &v, &SampleRegion::cube(1, 5.0, 0.01, vec![0.0]), 1.0).unwrap();
        assert!(r.pass);
        assert!((r.c_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_generator_matches_hand_table() {
        let s = ThresholdOu::default();
        let f = s.field().unwrap();
        let v = LyapunovSpec::quadratic_plus_one(1);
        // x < 0: 2x(1 - x) + 1; x >= 0: 2x(-1 - 2x) + 1
        let table = [
            (-2.0, -11.0),
            (-1.0, -3.0),
            (-0.5, -0.5),
            (-0.1, 0.78),
            (0.0, 1.0),
            (0.1, 0.76),
            (0.5, -1.0),
            (1.0, -5.0),
            (2.0, -19.0),
            (3.0, -41.0),
        ];
        for (x, want) in table {
            assert!((generator_apply(&f, &v, 0.0, &[x]).unwrap() - want).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn plain_square_degenerates_at_origin() {
        let f = CoefficientField::scalar(|_, x| -x, |_, _| 1.0, reg());
        let r = verify_lyapunov(&f, &LyapunovSpec::quadratic(1), &SampleRegion::cube(1, 1.0, 0.5, vec![0.0]), 10.0).unwrap();
        assert!(!r.pass);
        assert_eq!(r.degenerate_point, Some(vec![0.0]));
        assert!(r.c_hat.is_infinite());
    }

    #[test]
    fn explosion_bound_arithmetic_and_monotonicity() {
        let v = LyapunovSpec::quadratic_plus_one(1);
        let b = explosion_bound(&v, 1.0, &[0.0], 1.0, 10.0);
        assert!((b - 1f64.exp() / 101.0).abs() < 1e-15);
        let ladder: Vec<f64> = [2.0, 5.0, 10.0, 20.0, 40.0].iter().map(|&r| explosion_bound(&v, 1.0, &[0.0], 1.0, r)).collect();
        assert!(ladder.windows(2).all(|w| w[1] <= w[0]));
        assert!(explosion_bound(&v, 2.0, &[0.0], 1.0, 10.0) >= b);
        assert!(explosion_bound(&v, 1.0, &[0.0], 2.0, 10.0) >= b);
    }

    #[test]
    fn sampled_radial_infimum_matches_analytic() {
        let analytic = LyapunovSpec::quadratic_plus_one(2);
        let mut sampled = analytic.clone();
        sampled.radial_infimum = None;
        assert!((sampled.radial_infimum(3.0, 1.0) - analytic.radial_infimum(3.0, 1.0)).abs() < 1e-9);
    }
}
