//! Built-in coefficient fields.
//!
//! - threshold Ornstein-Uhlenbeck: `b(x) = beta_i - alpha_i x` on
//!   `[theta_{i-1}, theta_i)`, constant `sigma`;
//! - piecewise polynomial: `b(x) = sum_j beta_{k,j} x^j` on `[theta_{k-1}, theta_k)`;
//! - tabulated: `b`, `sigma` given at nodes, linearly interpolated;
//! - contrast cases: the explosive drift `x^3` and the smooth multiplicative
//!   noise `sigma(x) = 1 + sin(x)/2`.
//!
//! Only the interior thresholds are configured; the outer ones are `-inf`
//! and `+inf`. Intervals are left-closed, so `b(theta_i)` uses piece `i + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CoefficientField, Regularity};

fn check_thresholds(thetas: &[f64]) -> Result<()> {
    if thetas.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("thresholds must be finite".into()));
    }
    if thetas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(format!(
            "thresholds not increasing: {thetas:?}"
        )));
    }
    Ok(())
}

/// Index of the piece containing `x` under the left-closed convention.
#[inline]
pub fn piece_index(thetas: &[f64], x: f64) -> usize {
    thetas.partition_point(|&th| th <= x)
}

fn constant_sigma_regularity(sigma: f64, p: f64, q: f64) -> Result<Regularity> {
    if !(sigma.is_finite() && sigma != 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be finite and nonzero, got {sigma}")));
    }
    let s2 = sigma * sigma;
    Regularity::new(s2.max(1.0 / s2), 1.0, p, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOu {
    pub thetas: Vec<f64>,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub sigma: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for ThresholdOu {
    /// Two regimes split at 0 with a drift jump from +1 to -1.
    fn default() -> Self {
        Self {
            thetas: vec![0.0],
            betas: vec![1.0, -1.0],
            alphas: vec![1.0, 2.0],
            sigma: 1.0,
            p: 4.0,
            q: 4.0,
        }
    }
}

impl ThresholdOu {
    pub fn validate(&self) -> Result<()> {
        check_thresholds(&self.thetas)?;
        let n = self.thetas.len() + 1;
        if self.betas.len() != n || self.alphas.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} thresholds need {n} betas and {n} alphas, got {} and {}",
                self.thetas.len(),
                self.betas.len(),
                self.alphas.len()
            )));
        }
        constant_sigma_regularity(self.sigma, self.p, self.q).map(|_| ())
    }

    #[inline]
    pub fn drift_at(&self, x: f64) -> f64 {
        let i = piece_index(&self.thetas, x);
        self.betas[i] - self.alphas[i] * x
    }

    /// `L(1 + x^2) = 2 x b(x) + sigma^2`.
    pub fn generator_of_quadratic(&self, x: f64) -> f64 {
        2.0 * x * self.drift_at(x) + self.sigma * self.sigma
    }

    pub fn field(&self) -> Result<CoefficientField> {
        self.validate()?;
        let reg = constant_sigma_regularity(self.sigma, self.p, self.q)?;
        let me = self.clone();
        let sigma = self.sigma;
        Ok(CoefficientField::scalar(move |_, x| me.drift_at(x), move |_, _| sigma, reg)
            .time_homogeneous(true)
            .with_label("threshold_ou"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePoly {
    pub thetas: Vec<f64>,
    /// Row `k` holds `beta_{k,1}, ..., beta_{k,m_k}` (no constant term).
    pub coefficients: Vec<Vec<f64>>,
    pub sigma: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for PiecewisePoly {
    /// Odd leading degrees with negative leading coefficients on both
    /// unbounded pieces: `x + x^2/2 - x^3` left of 0, `-2x - x^3` right of it.
    fn default() -> Self {
        Self {
            thetas: vec![0.0],
            coefficients: vec![vec![1.0, 0.5, -1.0], vec![-2.0, 0.0, -1.0]],
            sigma: 1.0,
            p: 4.0,
            q: 4.0,
        }
    }
}

impl PiecewisePoly {
    pub fn validate(&self) -> Result<()> {
        check_thresholds(&self.thetas)?;
        let n = self.thetas.len() + 1;
        if self.coefficients.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} thresholds need {n} coefficient rows, got {}",
                self.thetas.len(),
                self.coefficients.len()
            )));
        }
        for (k, row) in self.coefficients.iter().enumerate() {
            match row.last() {
                None => {
                    return Err(Error::InvalidParameter(format!("coefficient row {k} is empty")))
                }
                Some(0.0) => {
                    return Err(Error::InvalidParameter(format!(
                        "leading coefficient of row {k} must be nonzero"
                    )))
                }
                _ => {}
            }
        }
        constant_sigma_regularity(self.sigma, self.p, self.q).map(|_| ())
    }

    /// Both unbounded pieces have odd degree and negative leading coefficient.
    pub fn is_stabilizing(&self) -> bool {
        let outer = [self.coefficients.first(), self.coefficients.last()];
        outer.iter().all(|row| {
            row.is_some_and(|r| r.len() % 2 == 1 && r.last().is_some_and(|&c| c < 0.0))
        })
    }

    #[inline]
    pub fn drift_at(&self, x: f64) -> f64 {
        let row = &self.coefficients[piece_index(&self.thetas, x)];
        // Horner on x * (c1 + x (c2 + ...))
        row.iter().rev().fold(0.0, |acc, &c| acc * x + c) * x
    }

    pub fn field(&self) -> Result<CoefficientField> {
        self.validate()?;
        let reg = constant_sigma_regularity(self.sigma, self.p, self.q)?;
        let me = self.clone();
        let sigma = self.sigma;
        Ok(CoefficientField::scalar(move |_, x| me.drift_at(x), move |_, _| sigma, reg)
            .time_homogeneous(true)
            .with_label("piecewise_poly"))
    }
}

/// Scalar coefficients tabulated at increasing nodes; linear in between and
/// constant beyond the end nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    pub nodes: Vec<f64>,
    pub drift: Vec<f64>,
    pub sigma: Vec<f64>,
    pub kappa: f64,
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
}

impl Tabulated {
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return Err(Error::InvalidParameter("a table needs at least two nodes".into()));
        }
        if self.drift.len() != self.nodes.len() || self.sigma.len() != self.nodes.len() {
            return Err(Error::InvalidParameter(
                "drift and sigma tables must match the node count".into(),
            ));
        }
        if self.nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("table nodes not increasing".into()));
        }
        if self.drift.iter().chain(&self.sigma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("table values must be finite".into()));
        }
        Regularity::new(self.kappa, self.alpha, self.p, self.q).map(|_| ())
    }

    fn lookup(nodes: &[f64], values: &[f64], x: f64) -> f64 {
        let n = nodes.len();
        if x <= nodes[0] {
            return values[0];
        }
        if x >= nodes[n - 1] {
            return values[n - 1];
        }
        let i = nodes.partition_point(|&s| s <= x) - 1;
        let w = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
        values[i] + w * (values[i + 1] - values[i])
    }

    pub fn drift_at(&self, x: f64) -> f64 {
        Self::lookup(&self.nodes, &self.drift, x)
    }

    pub fn sigma_at(&self, x: f64) -> f64 {
        Self::lookup(&self.nodes, &self.sigma, x)
    }

    pub fn field(&self) -> Result<CoefficientField> {
        self.validate()?;
        let reg = Regularity::new(self.kappa, self.alpha, self.p, self.q)?;
        let (b, s) = (self.clone(), self.clone());
        Ok(
            CoefficientField::scalar(move |_, x| b.drift_at(x), move |_, x| s.sigma_at(x), reg)
                .time_homogeneous(true)
                .with_label("custom"),
        )
    }
}

/// `dX = X^3 dt + dB`: outside every quadratic Lyapunov certificate, blows up
/// in finite time.
pub fn cubic_explosive(p: f64, q: f64) -> Result<CoefficientField> {
    let reg = Regularity::new(1.0, 1.0, p, q)?;
    Ok(CoefficientField::scalar(|_, x| x * x * x, |_, _| 1.0, reg)
        .time_homogeneous(true)
        .with_label("cubic"))
}

pub fn sinusoidal_sigma(x: f64) -> f64 {
    1.0 + 0.5 * x.sin()
}

pub fn sinusoidal_sigma_derivative(x: f64) -> f64 {
    0.5 * x.cos()
}

/// Zero drift, `sigma(x) = 1 + sin(x)/2`; `sigma^2` ranges over `[1/4, 9/4]`,
/// so `kappa = 4`.
pub fn sinusoidal_noise(p: f64, q: f64) -> Result<CoefficientField> {
    let reg = Regularity::new(4.0, 1.0, p, q)?;
    Ok(
        CoefficientField::scalar(|_, _| 0.0, |_, x| sinusoidal_sigma(x), reg)
            .time_homogeneous(true)
            .with_label("sinusoidal"),
    )
}
