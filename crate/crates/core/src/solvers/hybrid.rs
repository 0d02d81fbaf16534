//! Derivative-free Powell hybrid method for square nonlinear systems.
//!
//! Follows the structure of MINPACK's `hybrd`: a forward-difference Jacobian
//! that is refreshed only when progress stalls, Broyden rank-one updates in
//! between, and a scaled dogleg step inside an adaptive trust region.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridOptions {
    /// Maximum number of residual evaluations, finite differences included.
    pub maxfev: usize,
    /// Relative step-size tolerance on the scaled iterate.
    pub xtol: f64,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self {
            maxfev: 100,
            xtol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HybridStatus {
    Converged,
    MaxFev,
    /// The trust region collapsed to machine precision.
    XtolTooSmall,
    /// Repeated Jacobian refreshes or iterations made no progress.
    NoProgress,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutcome {
    /// Best iterate found.
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub nfev: usize,
    pub status: HybridStatus,
}

impl HybridOutcome {
    pub fn converged(&self) -> bool {
        self.status == HybridStatus::Converged
    }
}

const FACTOR: f64 = 100.0;

/// Finds `x` with `residual(x) = 0` for a square system.
pub fn hybrid_root<F>(mut residual: F, x_init: DVector<f64>, options: &HybridOptions) -> HybridOutcome
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let n = x_init.len();
    let eps = f64::EPSILON;
    let fd_step = libm::sqrt(eps);
    let mut x = x_init;
    let mut fvec = residual(&x);
    assert_eq!(fvec.len(), n, "hybrid_root needs a square system");
    let mut nfev = 1;
    let mut fnorm = fvec.norm();

    let finish = |x: DVector<f64>, fnorm: f64, nfev: usize, status| HybridOutcome {
        x,
        residual_norm: fnorm,
        nfev,
        status,
    };
    if fnorm == 0.0 || n == 0 {
        return finish(x, fnorm, nfev, HybridStatus::Converged);
    }

    let mut diag = DVector::from_element(n, 1.0);
    let mut delta = 0.0;
    let mut xnorm;
    let mut first = true;
    let mut nslow1 = 0;
    let mut nslow2 = 0;

    loop {
        // Forward-difference Jacobian.
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = if x[j] == 0.0 { fd_step } else { fd_step * x[j].abs() };
            let mut xp = x.clone();
            xp[j] += h;
            let fp = residual(&xp);
            jac.set_column(j, &((fp - &fvec) / h));
        }
        nfev += n;
        let mut jeval = true;

        for j in 0..n {
            let cn = jac.column(j).norm();
            if first {
                diag[j] = if cn == 0.0 { 1.0 } else { cn };
            } else {
                diag[j] = diag[j].max(cn);
            }
        }
        xnorm = diag.component_mul(&x).norm();
        if first {
            delta = if xnorm == 0.0 { FACTOR } else { FACTOR * xnorm };
        }

        let mut ncsuc = 0;
        let mut ncfail = 0;
        loop {
            let step = dogleg(&jac, &diag, &fvec, delta);
            let pnorm = diag.component_mul(&step).norm();
            if first {
                delta = delta.min(pnorm);
            }
            let x_trial = &x + &step;
            let f_trial = residual(&x_trial);
            nfev += 1;
            let fnorm1 = f_trial.norm();

            let actred = if fnorm1 < fnorm {
                1.0 - (fnorm1 / fnorm) * (fnorm1 / fnorm)
            } else {
                -1.0
            };
            let predicted = &fvec + &jac * &step;
            let pred_norm = predicted.norm();
            let prered = if pred_norm < fnorm {
                1.0 - (pred_norm / fnorm) * (pred_norm / fnorm)
            } else {
                0.0
            };
            let ratio = if prered > 0.0 { actred / prered } else { 0.0 };

            if ratio < 0.1 {
                ncsuc = 0;
                ncfail += 1;
                delta *= 0.5;
            } else {
                ncfail = 0;
                ncsuc += 1;
                if ratio >= 0.5 || ncsuc > 1 {
                    delta = delta.max(pnorm / 0.5);
                }
                if (ratio - 1.0).abs() <= 0.1 {
                    delta = pnorm / 0.5;
                }
            }

            let f_old = fvec.clone();
            if ratio >= 1e-4 {
                x = x_trial;
                fvec = f_trial.clone();
                xnorm = diag.component_mul(&x).norm();
                fnorm = fnorm1;
            }

            nslow1 = if actred >= 0.001 { 0 } else { nslow1 + 1 };
            if jeval {
                nslow2 = if actred >= 0.1 { 0 } else { nslow2 + 1 };
            }

            if delta <= options.xtol * xnorm || fnorm == 0.0 {
                return finish(x, fnorm, nfev, HybridStatus::Converged);
            }
            if nfev >= options.maxfev {
                return finish(x, fnorm, nfev, HybridStatus::MaxFev);
            }
            if 0.1 * (0.1 * delta).max(pnorm) <= eps * xnorm {
                return finish(x, fnorm, nfev, HybridStatus::XtolTooSmall);
            }
            if nslow2 == 5 || nslow1 == 10 {
                return finish(x, fnorm, nfev, HybridStatus::NoProgress);
            }
            if ncfail == 2 {
                break;
            }

            // Broyden rank-one update with the scaled step.
            if pnorm > 0.0 {
                let y = &f_trial - &f_old;
                let defect = (y - &jac * &step) / pnorm;
                let w = diag.component_mul(&diag).component_mul(&step) / pnorm;
                jac += defect * w.transpose();
            }
            jeval = false;
            first = false;
        }
        first = false;
    }
}

/// Scaled dogleg step `s` approximately minimizing `‖f + J s‖` subject to
/// `‖D s‖ ≤ delta`.
fn dogleg(jac: &DMatrix<f64>, diag: &DVector<f64>, f: &DVector<f64>, delta: f64) -> DVector<f64> {
    let n = f.len();
    let gn = gauss_newton_step(jac, f);
    if let Some(gn) = &gn {
        if diag.component_mul(gn).norm() <= delta {
            return gn.clone();
        }
    }
    // Steepest descent in the scaled variables z = D s.
    let grad = (jac.transpose() * f).component_div(diag);
    let gnorm = grad.norm();
    if gnorm == 0.0 {
        return gn.unwrap_or_else(|| DVector::zeros(n));
    }
    let dir = grad.component_div(diag);
    let jd = jac * &dir;
    let jd_norm2 = jd.norm_squared();
    let cauchy_len = if jd_norm2 > 0.0 {
        gnorm * gnorm / jd_norm2
    } else {
        f64::INFINITY
    };
    let z_cauchy = -&grad * cauchy_len;
    let zc_norm = z_cauchy.norm();
    let z = match gn {
        Some(gn) if zc_norm < delta => {
            let z_gn = diag.component_mul(&gn);
            let diff = &z_gn - &z_cauchy;
            let a = diff.norm_squared();
            let b = 2.0 * z_cauchy.dot(&diff);
            let c = zc_norm * zc_norm - delta * delta;
            let tau = if a > 0.0 {
                (-b + libm::sqrt((b * b - 4.0 * a * c).max(0.0))) / (2.0 * a)
            } else {
                0.0
            };
            z_cauchy + diff * tau.clamp(0.0, 1.0)
        }
        _ => -&grad * (delta / gnorm).min(cauchy_len),
    };
    z.component_div(diag)
}

fn gauss_newton_step(jac: &DMatrix<f64>, f: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = jac.clone().lu();
    let step = lu.solve(&(-f))?;
    step.iter().all(|v| v.is_finite()).then_some(step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn affine_system() {
        let c = DVector::from_vec(vec![3.0, -1.5, 2.0]);
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 3.0, 1.0, 1.0, 0.0, 4.0]);
        let out = hybrid_root(|x| &a * (x - &c), DVector::zeros(3), &HybridOptions::default());
        assert!(out.converged());
        assert!((out.x - c).amax() < 1e-8);
    }

    #[test]
    fn circle_diagonal_intersection() {
        let out = hybrid_root(
            |x| DVector::from_vec(vec![x[0] * x[0] + x[1] * x[1] - 1.0, x[0] - x[1]]),
            DVector::from_vec(vec![1.0, 0.0]),
            &HybridOptions::default(),
        );
        assert!(out.converged(), "{:?}", out.status);
        let h = 0.5f64.sqrt();
        assert!((out.x[0] - h).abs() < 1e-5 && (out.x[1] - h).abs() < 1e-5);
        assert!(out.nfev <= 100);
    }

    #[test]
    fn root_at_initial_point() {
        let out = hybrid_root(
            |x| DVector::from_vec(vec![x[0] - 1.0, x[1] + 2.0]),
            DVector::from_vec(vec![1.0, -2.0]),
            &HybridOptions::default(),
        );
        assert!(out.converged());
        assert_eq!(out.nfev, 1);
        assert_eq!(out.x, DVector::from_vec(vec![1.0, -2.0]));
    }

    #[test]
    fn maxfev_is_respected() {
        // x² + 1 has no real root.
        let out = hybrid_root(
            |x| DVector::from_vec(vec![x[0] * x[0] + 1.0]),
            DVector::from_vec(vec![3.0]),
            &HybridOptions {
                maxfev: 20,
                xtol: 1e-12,
            },
        );
        assert!(!out.converged());
        assert!(out.nfev <= 21);
        assert!(out.residual_norm >= 1.0);
    }
}
