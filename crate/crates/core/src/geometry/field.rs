use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(t, x, out)`: writes a vector (drift, length d) or a row-major d x d
/// matrix (diffusion) into `out`.
pub type VectorMap = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// `(t, x) -> value`.
pub type ScalarMap = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Regularity metadata carried by a coefficient field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    /// Ellipticity bound: eigenvalues of `sigma sigma^T` lie in `[1/kappa, kappa]`.
    pub kappa: f64,
    /// Spatial Hoelder exponent of the diffusion.
    pub alpha: f64,
    /// Spatial integrability exponent.
    pub p: f64,
    /// Temporal integrability exponent.
    pub q: f64,
}

impl Regularity {
    pub fn new(kappa: f64, alpha: f64, p: f64, q: f64) -> Result<Self> {
        if !(kappa >= 1.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {kappa}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(p > 1.0 && q > 1.0) {
            return Err(Error::InvalidParameter(format!("p, q must exceed 1, got p={p}, q={q}")));
        }
        Ok(Self { kappa, alpha, p, q })
    }

    /// `d/p + 2/q`.
    pub fn integrability_index(&self, dim: usize) -> f64 {
        dim as f64 / self.p + 2.0 / self.q
    }

    /// Default interval exponent `1/2 - d/(2p) - 1/q`.
    pub fn default_delta(&self, dim: usize) -> f64 {
        0.5 - dim as f64 / (2.0 * self.p) - 1.0 / self.q
    }

    /// Upper end of the admissible interval exponents, `1 - d/(2p) - 1/q`.
    pub fn max_delta(&self, dim: usize) -> f64 {
        1.0 - dim as f64 / (2.0 * self.p) - 1.0 / self.q
    }
}

/// Which hypothesis an experiment needs on `(p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Usage {
    /// Occupation-time bounds: `d/p + 2/q < 2`.
    Krylov,
    /// Transform construction and stability: `d/p + 2/q < 1`.
    Transform,
}

impl Usage {
    pub fn bound(self) -> f64 {
        match self {
            Usage::Krylov => 2.0,
            Usage::Transform => 1.0,
        }
    }
}

pub fn check_integrability(dim: usize, p: f64, q: f64, usage: Usage) -> Result<()> {
    let index = dim as f64 / p + 2.0 / q;
    if index < usage.bound() {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!(
            "d/p + 2/q = {index} (d={dim}, p={p}, q={q}) must be < {} for {usage:?}",
            usage.bound()
        )))
    }
}

/// Drift `b(t, x)` and diffusion `sigma(t, x)` of `dX = b dt + sigma dB`.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    drift: Arc<VectorMap>,
    diffusion: Arc<VectorMap>,
    regularity: Regularity,
    time_homogeneous: bool,
    label: String,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("regularity", &self.regularity)
            .field("time_homogeneous", &self.time_homogeneous)
            .finish()
    }
}

impl CoefficientField {
    pub fn new(
        dim: usize,
        drift: Arc<VectorMap>,
        diffusion: Arc<VectorMap>,
        regularity: Regularity,
    ) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must lie in 1..={MAX_DIM}");
        Self {
            dim,
            drift,
            diffusion,
            regularity,
            time_homogeneous: false,
            label: String::from("field"),
        }
    }

    /// Scalar SDE from plain closures `b(t, x)` and `sigma(t, x)`.
    pub fn scalar<B, S>(drift: B, sigma: S, regularity: Regularity) -> Self
    where
        B: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            1,
            Arc::new(move |t, x, out| out[0] = drift(t, x[0])),
            Arc::new(move |t, x, out| out[0] = sigma(t, x[0])),
            regularity,
        )
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Declare that neither coefficient depends on `t`.
    pub fn time_homogeneous(mut self, yes: bool) -> Self {
        self.time_homogeneous = yes;
        self
    }

    pub fn with_regularity(mut self, regularity: Regularity) -> Self {
        self.regularity = regularity;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn regularity(&self) -> &Regularity {
        &self.regularity
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.time_homogeneous
    }

    pub fn drift_map(&self) -> &Arc<VectorMap> {
        &self.drift
    }

    pub fn diffusion_map(&self) -> &Arc<VectorMap> {
        &self.diffusion
    }

    #[inline]
    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }

    /// `a = sigma sigma^T` into `out`, using `sigma` as scratch (both d x d).
    pub fn covariance(&self, t: f64, x: &[f64], sigma: &mut [f64], out: &mut [f64]) {
        let d = self.dim;
        (self.diffusion)(t, x, sigma);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += sigma[i * d + k] * sigma[j * d + k];
                }
                out[i * d + j] = s;
            }
        }
    }

    pub fn check_integrability(&self, usage: Usage) -> Result<()> {
        check_integrability(self.dim, self.regularity.p, self.regularity.q, usage)
    }

    /// Same diffusion, drift replaced.
    pub fn with_drift(&self, drift: Arc<VectorMap>) -> Self {
        Self {
            drift,
            ..self.clone()
        }
    }

    /// Same diffusion, zero drift.
    pub fn without_drift(&self) -> Self {
        self.with_drift(Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)))
    }

    /// `(b + eps h_b, sigma + eps h_sigma)`; missing directions leave the
    /// coefficient untouched (not even re-evaluated).
    pub fn perturbed(
        &self,
        drift_direction: Option<Arc<VectorMap>>,
        diffusion_direction: Option<Arc<VectorMap>>,
        eps: f64,
    ) -> Self {
        let d = self.dim;
        let drift = match drift_direction {
            Some(h) => {
                let base = Arc::clone(&self.drift);
                Arc::new(move |t: f64, x: &[f64], out: &mut [f64]| {
                    base(t, x, out);
                    let mut buf = [0.0; 8];
                    let hb = &mut buf[..d];
                    h(t, x, hb);
                    for (o, v) in out.iter_mut().zip(hb.iter()) {
                        *o += eps * v;
                    }
                }) as Arc<VectorMap>
            }
            None => Arc::clone(&self.drift),
        };
        let diffusion = match diffusion_direction {
            Some(h) => {
                let base = Arc::clone(&self.diffusion);
                Arc::new(move |t: f64, x: &[f64], out: &mut [f64]| {
                    base(t, x, out);
                    let mut buf = [0.0; 64];
                    let hs = &mut buf[..d * d];
                    h(t, x, hs);
                    for (o, v) in out.iter_mut().zip(hs.iter()) {
                        *o += eps * v;
                    }
                }) as Arc<VectorMap>
            }
            None => Arc::clone(&self.diffusion),
        };
        Self {
            drift,
            diffusion,
            label: format!("{}+{eps}h", self.label),
            ..self.clone()
        }
    }
}

/// Largest dimension supported by the fixed-size scratch buffers.
pub const MAX_DIM: usize = 8;
