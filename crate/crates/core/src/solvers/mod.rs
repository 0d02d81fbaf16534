//! Numerical kernels: Newton iteration, a derivative-free hybrid root finder,
//! a dense QP solver and an SQP method for equality/inequality-constrained
//! NLPs.

pub mod hybrid;
pub mod newton;
pub mod outer;
pub mod qp;
pub mod sqp;

pub use hybrid::{hybrid_root, HybridOptions, HybridOutcome, HybridStatus};
pub use newton::{newton_solve, NewtonOptions, NewtonOutcome};
pub use outer::solve_nlp_outer;
pub use qp::{solve_qp, QpError, QpProblem, QpSolution};
pub use sqp::{
    solve_nlp, FnProblem, NlpDerivatives, NlpProblem, NlpResult, NlpStatus, NlpValues,
    SolverOptions,
};
