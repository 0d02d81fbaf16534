use nalgebra::DVector;

use crate::error::Result;
use crate::linalg::LinearSolve;

/// Termination settings for [`newton_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop once `‖r(x)‖₂ < abs_tol`.
    pub abs_tol: f64,
    /// Stop once `‖r(x)‖₂ / ‖r(x_init)‖₂ < rel_tol`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-6,
            max_iter: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    /// Final iterate, or the best one seen when not converged.
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    pub converged: bool,
}

/// Undamped Newton iteration on `residual(x) = 0`.
///
/// `jacobian` returns anything that can solve a linear system with the
/// Jacobian at `x`; a singular Jacobian surfaces as an error.
pub fn newton_solve<R, J, M>(
    mut residual: R,
    mut jacobian: J,
    x_init: DVector<f64>,
    options: &NewtonOptions,
) -> Result<NewtonOutcome>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Result<M>,
    M: LinearSolve,
{
    let mut x = x_init;
    let mut r = residual(&x)?;
    let initial = r.norm();
    let mut norm = initial;
    let mut best = (x.clone(), norm);
    let done = |norm: f64| norm < options.abs_tol || (initial > 0.0 && norm / initial < options.rel_tol);

    let mut iterations = 0;
    while !done(norm) {
        if iterations == options.max_iter || !norm.is_finite() {
            return Ok(NewtonOutcome {
                x: best.0,
                iterations,
                residual_norm: best.1,
                initial_residual_norm: initial,
                converged: false,
            });
        }
        let delta = jacobian(&x)?.solve_linear(&r)?;
        x -= delta;
        r = residual(&x)?;
        norm = r.norm();
        iterations += 1;
        if norm < best.1 {
            best = (x.clone(), norm);
        }
    }
    Ok(NewtonOutcome {
        x,
        iterations,
        residual_norm: norm,
        initial_residual_norm: initial,
        converged: true,
    })
}
