//! Backward Cauchy-Dirichlet problem
//!
//! ```text
//! d_t u + (1/2) a : D^2 u + b . grad u + f = 0   on (t0, T) x D
//! u(T, .) = 0,   u = g on (t0, T) x dD
//! ```
//!
//! with `a = sigma sigma^T`, solved by fully implicit finite differences on a
//! box, together with the derivative reconstruction, mollification, decay
//! diagnostics and the window-length search used by the drift-removing
//! transform.

mod decay;
mod derivatives;
mod mollify;
mod solver;
mod window;

pub use decay::{verify_decay_estimates, DecayPoint, DecayReport};
pub use derivatives::{gradient_hessian, level_gradient};
pub use mollify::mollify;
pub use solver::{
    solve_cauchy_dirichlet, solve_vector_problem, PdeProblem, PdeSolution, SolverSettings,
    PECLET_LIMIT,
};
pub use window::{choose_window, jacobian_bound, WindowChoice, WindowProbe, WindowSettings};
