//! Dense strictly convex quadratic programs via the Goldfarb–Idnani dual
//! active-set method.
//!
//! ```text
//! minimize    ½ dᵀ H d + gᵀ d
//! subject to  A_eq d + c_eq  = 0
//!             A_in d + c_in ≥ 0
//! ```
//!
//! Multipliers follow the convention `H d + g = A_eqᵀ λ + A_inᵀ μ`, `μ ≥ 0`.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpError {
    /// The Hessian is not positive definite.
    NotConvex,
    /// The constraints admit no solution.
    Infeasible,
    /// Active-set iterations exceeded the safeguard limit.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub multipliers_eq: DVector<f64>,
    pub multipliers_ineq: DVector<f64>,
    pub active_ineq: Vec<usize>,
}

pub struct QpProblem<'a> {
    pub hessian: &'a DMatrix<f64>,
    pub gradient: &'a DVector<f64>,
    pub eq_matrix: &'a DMatrix<f64>,
    pub eq_offset: &'a DVector<f64>,
    pub ineq_matrix: &'a DMatrix<f64>,
    pub ineq_offset: &'a DVector<f64>,
}

struct Active {
    /// Index into the stacked `[eq; ineq]` constraint list.
    index: usize,
    normal: DVector<f64>,
    is_eq: bool,
    /// `+1` if `normal` is the original row, `−1` if it was negated.
    sign: f64,
}

pub fn solve_qp(p: &QpProblem<'_>) -> Result<QpSolution, QpError> {
    let n = p.gradient.len();
    let me = p.eq_offset.len();
    let mi = p.ineq_offset.len();
    debug_assert_eq!(p.eq_matrix.shape(), (me, n));
    debug_assert_eq!(p.ineq_matrix.shape(), (mi, n));

    let chol: Cholesky<f64, Dyn> = p.hessian.clone().cholesky().ok_or(QpError::NotConvex)?;

    let row = |i: usize| -> (DVector<f64>, f64) {
        if i < me {
            (p.eq_matrix.row(i).transpose(), -p.eq_offset[i])
        } else {
            (p.ineq_matrix.row(i - me).transpose(), -p.ineq_offset[i - me])
        }
    };
    let row_norms: Vec<f64> = (0..me + mi).map(|i| row(i).0.norm().max(1e-300)).collect();

    let mut x = -chol.solve(p.gradient);
    let mut active: Vec<Active> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut redundant_eq = alloc::vec![false; me];

    let tol = |i: usize, x: &DVector<f64>| -> f64 {
        let (_, b) = row(i);
        1e-12 * (1.0 + b.abs() + row_norms[i] * x.amax())
    };

    let limit = 10 * (n + me + mi) + 50;
    let mut outer = 0;
    loop {
        outer += 1;
        if outer > limit {
            return Err(QpError::IterationLimit);
        }

        // Pick the next constraint: unprocessed equalities in index order,
        // then the most violated inequality (lowest index on ties).
        let is_active = |i: usize, active: &[Active]| active.iter().any(|a| a.index == i);
        let mut pick: Option<usize> = (0..me).find(|&i| !redundant_eq[i] && !is_active(i, &active));
        if pick.is_none() {
            let mut worst = 0.0;
            for i in me..me + mi {
                if is_active(i, &active) {
                    continue;
                }
                let (a, b) = row(i);
                let s = a.dot(&x) - b;
                if s < -tol(i, &x) {
                    let scaled = s / row_norms[i];
                    if pick.is_none() || scaled < worst {
                        worst = scaled;
                        pick = Some(i);
                    }
                }
            }
        }
        let Some(pidx) = pick else { break };

        let (a, b) = row(pidx);
        let is_eq = pidx < me;
        let s0 = a.dot(&x) - b;
        let (normal, rhs, sign) = if is_eq && s0 > 0.0 {
            (-a, -b, -1.0)
        } else {
            (a, b, 1.0)
        };
        let mut u_new = 0.0;

        let mut inner = 0;
        loop {
            inner += 1;
            if inner > limit {
                return Err(QpError::IterationLimit);
            }
            let binv_np = chol.solve(&normal);
            let (z, r) = if active.is_empty() {
                (binv_np.clone(), DVector::zeros(0))
            } else {
                let q = active.len();
                let mut nmat = DMatrix::zeros(n, q);
                for (j, act) in active.iter().enumerate() {
                    nmat.set_column(j, &act.normal);
                }
                let binv_n = chol.solve(&nmat);
                let m = nmat.transpose() * &binv_n;
                let rhs_r = nmat.transpose() * &binv_np;
                let r = match m.clone().cholesky() {
                    Some(c) => c.solve(&rhs_r),
                    None => m.lu().solve(&rhs_r).ok_or(QpError::Infeasible)?,
                };
                (&binv_np - &binv_n * &r, r)
            };

            // Largest dual step keeping inequality multipliers nonnegative.
            let mut t1 = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for (j, act) in active.iter().enumerate() {
                if !act.is_eq && r[j] > 0.0 {
                    let ratio = u[j] / r[j];
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(j);
                    }
                }
            }

            let slack = normal.dot(&x) - rhs;
            let curvature = z.dot(&normal);
            let reference = normal.dot(&binv_np).max(f64::MIN_POSITIVE);
            let dependent = curvature <= 1e-13 * reference;

            if dependent {
                if is_eq && slack.abs() <= tol(pidx, &x) {
                    redundant_eq[pidx] = true;
                    break;
                }
                let Some(l) = drop else {
                    return Err(QpError::Infeasible);
                };
                for (j, uj) in u.iter_mut().enumerate() {
                    *uj -= t1 * r[j];
                }
                u_new += t1;
                active.remove(l);
                u.remove(l);
                continue;
            }

            let t2 = (-slack / curvature).max(0.0);
            let t = t1.min(t2);
            x.axpy(t, &z, 1.0);
            for (j, uj) in u.iter_mut().enumerate() {
                *uj -= t * r[j];
            }
            u_new += t;

            if t2 <= t1 {
                active.push(Active {
                    index: pidx,
                    normal,
                    is_eq,
                    sign,
                });
                u.push(u_new);
                break;
            }
            let l = drop.expect("finite t1 implies a blocking constraint");
            active.remove(l);
            u.remove(l);
        }
    }

    // The dual steps update x and u incrementally; re-solve the KKT system
    // of the final active set directly and keep it if it is still optimal.
    if !active.is_empty() {
        let q = active.len();
        let mut nmat = DMatrix::zeros(n, q);
        let mut rhs = DVector::zeros(q);
        for (j, act) in active.iter().enumerate() {
            nmat.set_column(j, &act.normal);
            rhs[j] = act.sign * row(act.index).1;
        }
        let binv_n = chol.solve(&nmat);
        let m = nmat.transpose() * &binv_n;
        let b = &rhs + nmat.transpose() * chol.solve(p.gradient);
        let refined = m.clone().cholesky().map(|c| c.solve(&b)).or_else(|| m.lu().solve(&b));
        if let Some(u_ref) = refined {
            let x_ref = chol.solve(&(&nmat * &u_ref - p.gradient));
            let dual_ok = active.iter().zip(u_ref.iter()).all(|(a, &v)| a.is_eq || v >= 0.0);
            let primal_ok = (0..me + mi).all(|i| {
                let (a, b) = row(i);
                let s = a.dot(&x_ref) - b;
                if i < me {
                    redundant_eq[i] || s.abs() <= tol(i, &x_ref) * 1e3
                } else {
                    s >= -tol(i, &x_ref) * 1e3
                }
            });
            if dual_ok && primal_ok && x_ref.iter().all(|v| v.is_finite()) {
                x = x_ref;
                u = u_ref.iter().copied().collect();
            }
        }
    }

    let mut multipliers_eq = DVector::zeros(me);
    let mut multipliers_ineq = DVector::zeros(mi);
    let mut active_ineq = Vec::new();
    for (act, &uj) in active.iter().zip(&u) {
        if act.is_eq {
            multipliers_eq[act.index] = act.sign * uj;
        } else {
            multipliers_ineq[act.index - me] = uj.max(0.0);
            active_ineq.push(act.index - me);
        }
    }
    active_ineq.sort_unstable();
    Ok(QpSolution {
        x,
        multipliers_eq,
        multipliers_ineq,
        active_ineq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn solve(
        h: DMatrix<f64>,
        g: DVector<f64>,
        ae: DMatrix<f64>,
        ce: DVector<f64>,
        ai: DMatrix<f64>,
        ci: DVector<f64>,
    ) -> Result<QpSolution, QpError> {
        solve_qp(&QpProblem {
            hessian: &h,
            gradient: &g,
            eq_matrix: &ae,
            eq_offset: &ce,
            ineq_matrix: &ai,
            ineq_offset: &ci,
        })
    }

    #[test]
    fn unconstrained_minimum() {
        let sol = solve(
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0])),
            DVector::from_vec(vec![-2.0, 4.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        assert!((sol.x - DVector::from_vec(vec![1.0, -1.0])).amax() < 1e-15);
    }

    #[test]
    fn quadprog_reference_example() {
        // min ½x² + ½y² + x  s.t. x + 2y ≥ 1  →  (−0.6, 0.8)
        let sol = solve(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            DVector::from_vec(vec![-1.0]),
        )
        .unwrap();
        assert!((sol.x[0] + 0.6).abs() < 1e-14 && (sol.x[1] - 0.8).abs() < 1e-14);
        assert!((sol.multipliers_ineq[0] - 0.4).abs() < 1e-14);
        assert_eq!(sol.active_ineq, vec![0]);
    }

    #[test]
    fn equality_with_positive_slack_gets_signed_multiplier() {
        // min ½‖x‖² − 3x₀ s.t. x₀ + x₁ = 1  →  x = (2, −1), λ = −1
        let sol = solve(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![-3.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![-1.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-14 && (sol.x[1] + 1.0).abs() < 1e-14);
        // Stationarity: H x + g = Aᵀ λ.
        let lam = sol.multipliers_eq[0];
        assert!((sol.x[0] - 3.0 - lam).abs() < 1e-14);
        assert!((sol.x[1] - lam).abs() < 1e-14);
    }

    #[test]
    fn infeasible_constraints_are_detected() {
        // x ≥ 1 and −x ≥ 0.
        let res = solve(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
        );
        assert_eq!(res, Err(QpError::Infeasible));
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let sol = solve(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]),
            DVector::from_vec(vec![-1.0, -2.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-14 && sol.x[1].abs() < 1e-14);
    }

    #[test]
    fn non_convex_hessian_is_rejected() {
        let res = solve(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        );
        assert_eq!(res, Err(QpError::NotConvex));
    }
}
