//! Adams linear multistep schemes.
//!
//! A step has the form `y_{n+s} = y_{n+s-1} + δ·Σ_j b_j F_{n+j}`. The
//! explicit Adams-Bashforth family uses `F_n … F_{n+s-1}`; the implicit
//! Adams-Moulton family additionally weights `F_{n+s}`, supplied here by a
//! predictor-corrector pass instead of a nonlinear solve.

mod history;
mod ivp;
mod scheme;
mod step;

pub use history::RhsHistory;
pub(crate) use ivp::is_exact;
pub use ivp::{
    empirical_order, final_error, solve_ivp, ExactFn, IvpProblem, RhsFn, SolveMode, Trajectory,
};
pub use scheme::{scheme_coeffs, Family, MultistepScheme};
pub use step::{ab_step, adaptive_pair, am_step, pc_step, Combine, VecSpace};
