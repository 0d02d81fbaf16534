//! Full-order model fixtures with analytic Jacobians.

mod burgers;
mod diffusion;
mod euler;

pub use burgers::BurgersModel;
pub use diffusion::{DiffusionModel, SourceDeposition};
pub use euler::EulerModel;

use nalgebra::DVector;

use crate::fom::{FullOrderModel, ParamVector};

/// Largest entrywise deviation between the analytic Jacobian and central
/// differences of the velocity, relative to the largest Jacobian entry.
pub fn jacobian_fd_error<M: FullOrderModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    t: f64,
    mu: &ParamVector,
) -> f64 {
    let analytic = model.velocity_jacobian(x, t, mu).to_dense();
    let scale = analytic.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for j in 0..x.len() {
        let h = 1e-6 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (model.velocity(&xp, t, mu) - model.velocity(&xm, t, mu)) / (2.0 * h);
        for i in 0..x.len() {
            worst = worst.max((col[i] - analytic[(i, j)]).abs());
        }
    }
    worst / scale
}
