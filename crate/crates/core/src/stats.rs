//! Small statistics helpers shared by the Monte Carlo checks.
//!
//! All reductions run sequentially in slice order so results are bit-exact
//! for a given input ordering.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation / sqrt(n)).
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, n }
    }

    /// `|a - b| / sqrt(se_a^2 + se_b^2)`, the gap in combined standard errors.
    pub fn z_gap(&self, other: &MeanEstimate) -> f64 {
        let se = (self.se * self.se + other.se * other.se).sqrt();
        let gap = (self.mean - other.mean).abs();
        if se == 0.0 {
            if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            gap / se
        }
    }
}

/// Ordinary least squares `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for an exact fit or two points.
    pub slope_se: f64,
    pub n: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit {
        slope,
        intercept,
        slope_se,
        n,
    })
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        // advance past ties on both sides before comparing CDFs
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at significance `alpha`:
/// `sqrt(-ln(alpha/2)/2) * sqrt((n+m)/(n m))`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}
