//! Total variation of 1-D fields and the scalar tvd/tvb/ec expressions.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};

/// `sgn` with `sgn(0) = 0`.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn require_len(x: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "total variation needs at least 2 values, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// `Σ |x_{i+1} − x_i|`.
pub fn total_variation(x: &[f64]) -> Result<f64> {
    require_len(x)?;
    Ok(x.windows(2).map(|w| (w[1] - w[0]).abs()).sum())
}

/// `Dᵀ sgn(D x)` with `D` the forward difference: a subgradient of TV at `x`
/// (the gradient away from kinks).
pub fn tv_subgradient(x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len().saturating_sub(1) {
        let s = sgn(x[i + 1] - x[i]);
        g[i + 1] += s;
        g[i] -= s;
    }
    g
}

/// `−Σ sgn(x_{i+1} − x_i)(ẋ_{i+1} − ẋ_i)`, nonnegative when TV is not
/// increasing along `ẋ`.
pub fn tvd_value(x: &[f64], xdot: &[f64]) -> Result<f64> {
    require_len(x)?;
    check_dim("tvd velocity", x.len(), xdot.len())?;
    Ok(-x
        .windows(2)
        .zip(xdot.windows(2))
        .map(|(w, v)| sgn(w[1] - w[0]) * (v[1] - v[0]))
        .sum::<f64>())
}

/// `b − TV(x)`.
pub fn tvb_value(x: &[f64], b: f64) -> Result<f64> {
    Ok(b - total_variation(x)?)
}

/// `∇Eᵀ ẋ − S`.
pub fn ec_value(energy_gradient: &DVector<f64>, xdot: &DVector<f64>, source: f64) -> Result<f64> {
    check_dim("ec velocity", energy_gradient.len(), xdot.len())?;
    Ok(energy_gradient.dot(xdot) - source)
}
