use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Estimate checks that merely fail (a slope outside its band, a violated
/// bound) are reported through their report structs, not through this type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value {value} at {location}")]
    NonFinite { value: f64, location: String },

    #[error("query at t={t}, x={x:?} lies outside the grid box")]
    OutOfGrid { t: f64, x: Vec<f64> },

    #[error("integrability hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    #[error("diffusion matrix not symmetric at {location} (asymmetry {asymmetry:e})")]
    AsymmetricDiffusion { location: String, asymmetry: f64 },

    #[error("linear solve did not converge at time step {step} (residual {residual:e})")]
    SolveDiverged { step: usize, residual: f64 },

    #[error("window too long: sup |grad u| = {sup_grad} exceeds 1/2; shorten it (choose_window)")]
    WindowTooLong { sup_grad: f64 },

    #[error("no admissible window of at least {min_steps} time steps (last tried {tried}, sup |grad u| = {sup_grad})")]
    NoAdmissibleWindow {
        min_steps: usize,
        tried: f64,
        sup_grad: f64,
    },

    #[error("inverse transform failed: {0}")]
    Inversion(String),

    #[error("bi-Lipschitz audit failed: {0}")]
    Audit(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(value: f64, location: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            value,
            location: location(),
        })
    }
}
