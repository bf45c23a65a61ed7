//! Monte Carlo checks of the quantitative estimates behind the construction:
//! the localized occupation-time (Krylov) bound, the stability of tied pairs
//! under coefficient perturbations, and the exponential-moment lemma.
//!
//! The theorems only assert that some constant exists. The checks therefore
//! fit exponents and report the smallest constant that dominates every
//! ladder point; they never claim a specific value for it.

mod expmoment;
mod krylov;
mod stability;

pub use expmoment::{
    exponential_moment_check, ExpMomentReport, ExpMomentSettings, LambdaRow, RhoPoint, STABILIZATION_TOLERANCE,
};
pub use krylov::{krylov_check, ConditionalCheck, KrylovReport, KrylovRow, KrylovSettings, RestartSettings};
pub use stability::{stability_check, StabilityReport, StabilityRow, StabilitySettings, STABILITY_SLOPE_BAND};

use crate::error::{Error, Result};
use crate::sde::TimeStepping;

/// Step index of `t` on `stepping`, which must be a grid time.
pub(crate) fn grid_step(stepping: &TimeStepping, t: f64) -> Result<usize> {
    let k = ((t - stepping.t_start) / stepping.dt).round();
    if k < 0.0 || k as usize > stepping.steps || (stepping.time(k as usize) - t).abs() > 1e-9 * stepping.dt.max(t.abs()) {
        return Err(Error::InvalidParameter(format!(
            "time {t} is not a grid time of step {} on [{}, {}]",
            stepping.dt,
            stepping.t_start,
            stepping.t_end()
        )));
    }
    Ok(k as usize)
}
