//! Outer approximation for NLPs with piecewise inequality rows.
//!
//! For a concave `g`, every linearization `ℓ_k(x) = g(x_k) + ∇g(x_k)(x − x_k)`
//! overestimates `g`, so `{ℓ_k ≥ 0}` relaxes `{g ≥ 0}` and linearizations from
//! all earlier iterates can be kept. This matters for piecewise-linear rows
//! such as `b − TV(x)`: a single frozen-sign linearization per iterate cycles
//! at kinks, the accumulated cuts do not.
//!
//! Rows that are linear on each of finitely many pieces but jump between them
//! are handled the same way. The cuts then need not relax the row, but a
//! point satisfying the cut of its own piece satisfies the row, so the loop
//! still ends once no new piece is visited.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::sqp::{solve_nlp, NlpDerivatives, NlpProblem, NlpResult, NlpStatus, NlpValues, SolverOptions};

struct Cut {
    row: usize,
    offset: f64,
    gradient: DVector<f64>,
}

struct WithCuts<'a, P: ?Sized> {
    inner: &'a P,
    /// Inequality rows passed through unchanged.
    smooth_rows: &'a [usize],
    cuts: &'a [Cut],
}

impl<P: NlpProblem + ?Sized> NlpProblem for WithCuts<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn values(&self, x: &DVector<f64>) -> NlpValues {
        let v = self.inner.values(x);
        let ineq = self
            .smooth_rows
            .iter()
            .map(|&r| v.ineq[r])
            .chain(self.cuts.iter().map(|c| c.offset + c.gradient.dot(x)));
        NlpValues {
            objective: v.objective,
            eq: v.eq,
            ineq: DVector::from_iterator(self.smooth_rows.len() + self.cuts.len(), ineq),
        }
    }

    fn derivatives(&self, x: &DVector<f64>) -> NlpDerivatives {
        let d = self.inner.derivatives(x);
        let n = self.inner.dim();
        let mut jac = DMatrix::zeros(self.smooth_rows.len() + self.cuts.len(), n);
        for (i, &r) in self.smooth_rows.iter().enumerate() {
            jac.set_row(i, &d.ineq_jacobian.row(r));
        }
        for (i, c) in self.cuts.iter().enumerate() {
            jac.set_row(self.smooth_rows.len() + i, &c.gradient.transpose());
        }
        NlpDerivatives {
            gradient: d.gradient,
            eq_jacobian: d.eq_jacobian,
            ineq_jacobian: jac,
            hessian: d.hessian,
        }
    }
}

/// Like [`solve_nlp`], but inequality rows flagged in `cut_rows` are replaced
/// by the growing set of their linearizations at all outer iterates. Each
/// outer iteration solves the relaxed problem to KKT tolerance; the result is
/// accepted once the true rows are feasible within `constraint_tol`.
///
/// Reported multipliers of a cut row are the sums over its cuts. The KKT
/// fields are those of the last relaxed problem (complementarity against the
/// cuts) with the feasibility of the true rows.
pub fn solve_nlp_outer<P: NlpProblem + ?Sized>(
    problem: &P,
    cut_rows: &[bool],
    options: &SolverOptions,
) -> NlpResult {
    if !cut_rows.iter().any(|&c| c) {
        return solve_nlp(problem, options);
    }
    let n = problem.dim();
    let smooth_rows: Vec<usize> = (0..cut_rows.len()).filter(|&r| !cut_rows[r]).collect();
    let mut x = options
        .warm_start
        .clone()
        .filter(|w| w.len() == n)
        .unwrap_or_else(|| DVector::zeros(n));
    let mut cuts: Vec<Cut> = Vec::new();
    let mut iterations = 0;

    let add_cuts = |x: &DVector<f64>, cuts: &mut Vec<Cut>| -> bool {
        let v = problem.values(x);
        let d = problem.derivatives(x);
        let mut added = false;
        for (r, _) in cut_rows.iter().enumerate().filter(|(_, &c)| c) {
            let gradient = d.ineq_jacobian.row(r).transpose();
            let offset = v.ineq[r] - gradient.dot(x);
            let duplicate = cuts
                .iter()
                .any(|c| c.row == r && c.offset == offset && c.gradient == gradient);
            if !duplicate {
                cuts.push(Cut {
                    row: r,
                    offset,
                    gradient,
                });
                added = true;
            }
        }
        added
    };
    add_cuts(&x, &mut cuts);

    loop {
        let relaxed = WithCuts {
            inner: problem,
            smooth_rows: &smooth_rows,
            cuts: &cuts,
        };
        let res = solve_nlp(&relaxed, &options.with_warm_start(x.clone()));
        iterations += res.iterations;
        x = res.point.clone();
        let g = problem.values(&x).ineq;
        let mut mult = DVector::zeros(cut_rows.len());
        for (i, &r) in smooth_rows.iter().enumerate() {
            mult[r] = res.multipliers_ineq[i];
        }
        for (k, c) in cuts.iter().enumerate() {
            mult[c.row] += res.multipliers_ineq[smooth_rows.len() + k];
        }
        let feas = g.iter().fold(0.0f64, |m, &v| m.max(-v));
        let comp = res.kkt_complementarity;
        let done = |status| NlpResult {
            point: x.clone(),
            objective: res.objective,
            multipliers_eq: res.multipliers_eq.clone(),
            multipliers_ineq: mult.clone(),
            kkt_stationarity: res.kkt_stationarity,
            kkt_feasibility_eq: res.kkt_feasibility_eq,
            kkt_feasibility_ineq: feas,
            kkt_complementarity: comp,
            status,
            iterations,
        };
        if !res.converged() {
            return done(res.status);
        }
        if feas <= options.constraint_tol {
            return done(NlpStatus::Converged);
        }
        if iterations >= options.max_iter || !add_cuts(&x, &mut cuts) {
            return done(NlpStatus::MaxIter);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::FnProblem;

    #[test]
    fn l1_ball_projection() {
        // min ½‖x − (2, 1, −0.5)‖² s.t. 1.5 − ‖x‖₁ ≥ 0 → soft threshold at 0.75.
        let target = DVector::from_vec(alloc::vec![2.0, 1.0, -0.5]);
        let obj = |x: &DVector<f64>| 0.5 * (x - &target).norm_squared();
        let grad = |x: &DVector<f64>| x - &target;
        let g = |x: &DVector<f64>| DVector::from_element(1, 1.5 - x.iter().map(|v| v.abs()).sum::<f64>());
        let jg = |x: &DVector<f64>| {
            DMatrix::from_fn(1, 3, |_, j| {
                let s = x[j];
                if s > 0.0 {
                    -1.0
                } else if s < 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
        };
        let p = FnProblem {
            dim: 3,
            objective: &obj,
            gradient: &grad,
            eq: None,
            ineq: Some((&g, &jg)),
        };
        let r = solve_nlp_outer(&p, &[true], &SolverOptions::default());
        assert!(r.converged(), "{:?}", r.status);
        let expect = DVector::from_vec(alloc::vec![1.25, 0.25, 0.0]);
        assert!((&r.point - expect).amax() < 1e-8, "{}", r.point);
        assert!((r.multipliers_ineq[0] - 0.75).abs() < 1e-8);
    }
}
