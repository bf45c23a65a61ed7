use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set the simulator can stop on: the path is alive while `contains` holds.
pub trait Region: Send + Sync {
    fn dim(&self) -> usize;
    fn contains(&self, x: &[f64]) -> bool;
}

/// Open box `prod_i (lo_i, hi_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl BoundedDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidDomain(format!(
                "bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidDomain(format!(
                    "axis {i}: need finite lo < hi, got ({a}, {b})"
                )));
            }
        }
        Ok(Self {
            lo,
            hi,
            label: None,
        })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    /// The cube `(-r, r)^d`.
    pub fn centered_cube(dim: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r; dim], vec![r; dim])
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.width(i).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Closed-box membership, used for interpolation bounds.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// Distance from `x` (inside the box) to the complement.
    pub fn dist_to_complement(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (a, b))| (v - a).min(b - v))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }
}

impl Region for BoundedDomain {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    #[inline]
    fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *a < *v && *v < *b)
    }
}

/// Open centered ball `{ |x| < radius }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    pub dim: usize,
    pub radius: f64,
}

impl Ball {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "ball needs dim >= 1 and finite radius > 0, got dim {dim}, radius {radius}"
            )));
        }
        Ok(Self { dim, radius })
    }
}

impl Region for Ball {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn contains(&self, x: &[f64]) -> bool {
        x.iter().map(|v| v * v).sum::<f64>() < self.radius * self.radius
    }
}

/// All of `R^d`; paths on it stop only on a non-finite state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WholeSpace {
    pub dim: usize,
}

impl Region for WholeSpace {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_interior() {
        assert!(BoundedDomain::interval(1.0, 1.0).is_err());
        assert!(BoundedDomain::new(vec![0.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(BoundedDomain::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn membership_is_open() {
        let d = BoundedDomain::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert!(d.contains(&[0.5, 0.0]));
        assert!(!d.contains(&[0.0, 0.0]));
        assert!(!d.contains(&[0.5, 1.0]));
        assert!(d.contains_closed(&[0.0, 1.0]));
        assert!(!d.contains(&[f64::NAN, 0.0]));
        assert!((d.diameter() - 5.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(d.dist_to_complement(&[0.25, 0.0]), 0.25);
    }

    #[test]
    fn ball_membership() {
        let b = Ball::new(2, 1.0).unwrap();
        assert!(b.contains(&[0.6, 0.7]));
        assert!(!b.contains(&[0.6, 0.8]));
    }
}
