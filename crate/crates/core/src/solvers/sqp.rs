//! Sequential quadratic programming for small dense NLPs.
//!
//! Each iteration solves a convex QP built from a damped-BFGS approximation of
//! the Lagrangian Hessian (or a Hessian approximation supplied by the
//! problem, e.g. Gauss–Newton for least-squares objectives) and the
//! linearized constraints, then globalizes the step with an ℓ₁ merit
//! backtracking line search. Inconsistent linearizations fall back to an
//! elastic QP with penalized slacks.

use nalgebra::{DMatrix, DVector};

use super::qp::{solve_qp, QpError, QpProblem};
use crate::linalg::inf_norm;

/// Objective values and constraint values at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpValues {
    pub objective: f64,
    /// Equality constraints, target `= 0`.
    pub eq: DVector<f64>,
    /// Inequality constraints, target `≥ 0`.
    pub ineq: DVector<f64>,
}

/// First derivatives at a point, plus an optional Hessian approximation of
/// the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpDerivatives {
    pub gradient: DVector<f64>,
    pub eq_jacobian: DMatrix<f64>,
    pub ineq_jacobian: DMatrix<f64>,
    /// When present, replaces the BFGS approximation for this iterate.
    pub hessian: Option<DMatrix<f64>>,
}

/// A smooth NLP `min f(x) s.t. c_eq(x) = 0, c_in(x) ≥ 0`.
pub trait NlpProblem {
    fn dim(&self) -> usize;
    fn values(&self, x: &DVector<f64>) -> NlpValues;
    fn derivatives(&self, x: &DVector<f64>) -> NlpDerivatives;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Objective-change tolerance used to detect stagnation.
    pub ftol: f64,
    /// Tolerance on the ∞-norm of the Lagrangian gradient.
    pub gtol: f64,
    /// Relative step tolerance used to detect stagnation.
    pub xtol: f64,
    /// Tolerance on constraint violation and complementarity.
    pub constraint_tol: f64,
    pub warm_start: Option<DVector<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            ftol: 1e-10,
            gtol: 1e-8,
            xtol: 1e-12,
            constraint_tol: 1e-10,
            warm_start: None,
        }
    }
}

impl SolverOptions {
    pub fn with_warm_start(&self, x: DVector<f64>) -> Self {
        Self {
            warm_start: Some(x),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlpStatus {
    Converged,
    MaxIter,
    InfeasibleDetected,
    /// The merit line search could not make progress.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpResult {
    pub point: DVector<f64>,
    pub objective: f64,
    pub multipliers_eq: DVector<f64>,
    pub multipliers_ineq: DVector<f64>,
    pub kkt_stationarity: f64,
    pub kkt_feasibility_eq: f64,
    pub kkt_feasibility_ineq: f64,
    pub kkt_complementarity: f64,
    pub status: NlpStatus,
    pub iterations: usize,
}

impl NlpResult {
    pub fn converged(&self) -> bool {
        self.status == NlpStatus::Converged
    }
}

#[derive(Debug, Clone, Copy)]
struct Kkt {
    stationarity: f64,
    feas_eq: f64,
    feas_ineq: f64,
    complementarity: f64,
}

impl Kkt {
    fn evaluate(
        vals: &NlpValues,
        ders: &NlpDerivatives,
        lam: &DVector<f64>,
        mu: &DVector<f64>,
    ) -> Self {
        let grad_l = lagrangian_gradient(ders, lam, mu);
        Self {
            stationarity: inf_norm(&grad_l),
            feas_eq: inf_norm(&vals.eq),
            feas_ineq: vals.ineq.iter().fold(0.0f64, |m, g| m.max(-g)),
            complementarity: mu
                .iter()
                .zip(vals.ineq.iter())
                .fold(0.0f64, |m, (u, g)| m.max((u * g).abs())),
        }
    }

    /// Largest KKT measure relative to its tolerance.
    fn scaled_error(&self, o: &SolverOptions) -> f64 {
        (self.stationarity / o.gtol)
            .max(self.feas_eq / o.constraint_tol)
            .max(self.feas_ineq / o.constraint_tol)
            .max(self.complementarity / o.constraint_tol)
    }

    fn satisfied(&self, o: &SolverOptions) -> bool {
        self.stationarity <= o.gtol
            && self.feas_eq <= o.constraint_tol
            && self.feas_ineq <= o.constraint_tol
            && self.complementarity <= o.constraint_tol
    }
}

fn lagrangian_gradient(ders: &NlpDerivatives, lam: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
    let mut g = ders.gradient.clone();
    if !lam.is_empty() {
        g -= ders.eq_jacobian.transpose() * lam;
    }
    if !mu.is_empty() {
        g -= ders.ineq_jacobian.transpose() * mu;
    }
    g
}

fn violation(vals: &NlpValues) -> f64 {
    vals.eq.iter().map(|c| c.abs()).sum::<f64>() + vals.ineq.iter().map(|g| (-g).max(0.0)).sum::<f64>()
}

/// Adds the smallest ridge `τ I` (τ growing tenfold) that makes `h`
/// Cholesky-factorizable.
fn positive_definite(mut h: DMatrix<f64>) -> DMatrix<f64> {
    h = (&h + h.transpose()) * 0.5;
    if h.clone().cholesky().is_some() {
        return h;
    }
    let scale = h.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1.0);
    let mut tau = 1e-12 * scale;
    loop {
        let mut trial = h.clone();
        for i in 0..trial.nrows() {
            trial[(i, i)] += tau;
        }
        if trial.clone().cholesky().is_some() {
            return trial;
        }
        tau *= 10.0;
    }
}

struct Step {
    d: DVector<f64>,
    lam: DVector<f64>,
    mu: DVector<f64>,
    elastic: bool,
}

fn qp_step(h: &DMatrix<f64>, vals: &NlpValues, ders: &NlpDerivatives, penalty: f64) -> Option<Step> {
    let problem = QpProblem {
        hessian: h,
        gradient: &ders.gradient,
        eq_matrix: &ders.eq_jacobian,
        eq_offset: &vals.eq,
        ineq_matrix: &ders.ineq_jacobian,
        ineq_offset: &vals.ineq,
    };
    match solve_qp(&problem) {
        Ok(s) => Some(Step {
            d: s.x,
            lam: s.multipliers_eq,
            mu: s.multipliers_ineq,
            elastic: false,
        }),
        Err(QpError::Infeasible | QpError::IterationLimit) => elastic_step(h, vals, ders, penalty),
        Err(QpError::NotConvex) => None,
    }
}

/// QP with penalized slacks `s⁺, s⁻` on equalities and `s` on inequalities,
/// which is always feasible.
fn elastic_step(h: &DMatrix<f64>, vals: &NlpValues, ders: &NlpDerivatives, penalty: f64) -> Option<Step> {
    let n = ders.gradient.len();
    let me = vals.eq.len();
    let mi = vals.ineq.len();
    let ns = 2 * me + mi;
    let total = n + ns;
    let h_scale = h.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1e-12);

    let mut hh = DMatrix::zeros(total, total);
    hh.view_mut((0, 0), (n, n)).copy_from(h);
    for i in n..total {
        hh[(i, i)] = 1e-8 * h_scale;
    }
    let mut gg = DVector::from_element(total, penalty);
    gg.rows_mut(0, n).copy_from(&ders.gradient);

    let mut ae = DMatrix::zeros(me, total);
    ae.view_mut((0, 0), (me, n)).copy_from(&ders.eq_jacobian);
    for i in 0..me {
        ae[(i, n + i)] = 1.0;
        ae[(i, n + me + i)] = -1.0;
    }
    let mut ai = DMatrix::zeros(mi + ns, total);
    ai.view_mut((0, 0), (mi, n)).copy_from(&ders.ineq_jacobian);
    for i in 0..mi {
        ai[(i, n + 2 * me + i)] = 1.0;
    }
    for k in 0..ns {
        ai[(mi + k, n + k)] = 1.0;
    }
    let mut ci = DVector::zeros(mi + ns);
    ci.rows_mut(0, mi).copy_from(&vals.ineq);

    let sol = solve_qp(&QpProblem {
        hessian: &hh,
        gradient: &gg,
        eq_matrix: &ae,
        eq_offset: &vals.eq,
        ineq_matrix: &ai,
        ineq_offset: &ci,
    })
    .ok()?;
    Some(Step {
        d: sol.x.rows(0, n).into_owned(),
        lam: sol.multipliers_eq,
        mu: sol.multipliers_ineq.rows(0, mi).into_owned(),
        elastic: true,
    })
}

/// Powell-damped BFGS update of `b` with step `s` and gradient change `y`.
fn damped_bfgs(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if sbs <= 0.0 || !sbs.is_finite() {
        return;
    }
    let sy = s.dot(y);
    let y = if sy < 0.2 * sbs {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    } else {
        y.clone()
    };
    let sy = s.dot(&y);
    if sy <= 0.0 || !sy.is_finite() {
        return;
    }
    *b += &y * y.transpose() / sy - &bs * bs.transpose() / sbs;
}

const MAX_ELASTIC_ITERATIONS: usize = 5;
const ARMIJO: f64 = 1e-4;

/// Solves an NLP by SQP. Deterministic: identical inputs give bit-identical
/// results.
pub fn solve_nlp<P: NlpProblem + ?Sized>(problem: &P, options: &SolverOptions) -> NlpResult {
    let n = problem.dim();
    let mut x = options
        .warm_start
        .clone()
        .filter(|w| w.len() == n)
        .unwrap_or_else(|| DVector::zeros(n));
    let mut vals = problem.values(&x);
    let mut ders = problem.derivatives(&x);
    let me = vals.eq.len();
    let mi = vals.ineq.len();

    let mut bfgs = DMatrix::<f64>::identity(n, n);
    let mut rho = 0.0f64;
    let mut elastic_run = 0;
    let mut best_violation = f64::INFINITY;
    let mut stagnant = 0;
    let mut lam = DVector::zeros(me);
    let mut mu = DVector::zeros(mi);
    let mut bfgs_reset = false;

    let result = |x: DVector<f64>, vals: &NlpValues, lam: DVector<f64>, mu: DVector<f64>, kkt: Kkt, status, it| NlpResult {
        point: x,
        objective: vals.objective,
        multipliers_eq: lam,
        multipliers_ineq: mu,
        kkt_stationarity: kkt.stationarity,
        kkt_feasibility_eq: kkt.feas_eq,
        kkt_feasibility_ineq: kkt.feas_ineq,
        kkt_complementarity: kkt.complementarity,
        status,
        iterations: it,
    };

    for iter in 0..=options.max_iter {
        let h = match &ders.hessian {
            Some(h) => positive_definite(h.clone()),
            None => bfgs.clone(),
        };
        let penalty = 1e3 * (1.0 + inf_norm(&ders.gradient)).max(rho);
        let step = qp_step(&h, &vals, &ders, penalty)
            .or_else(|| qp_step(&DMatrix::identity(n, n), &vals, &ders, penalty));
        let Some(step) = step else {
            let kkt = Kkt::evaluate(&vals, &ders, &lam, &mu);
            return result(x, &vals, lam, mu, kkt, NlpStatus::InfeasibleDetected, iter);
        };

        let kkt = Kkt::evaluate(&vals, &ders, &step.lam, &step.mu);
        log::trace!(
            "sqp {iter}: f {:e} stat {:e} feas {:e}/{:e} comp {:e} |d| {:e} elastic {}",
            vals.objective,
            kkt.stationarity,
            kkt.feas_eq,
            kkt.feas_ineq,
            kkt.complementarity,
            inf_norm(&step.d),
            step.elastic
        );
        if !step.elastic && kkt.satisfied(options) {
            return result(x, &vals, step.lam, step.mu, kkt, NlpStatus::Converged, iter);
        }
        lam = step.lam.clone();
        mu = step.mu.clone();
        if iter == options.max_iter {
            return result(x, &vals, lam, mu, kkt, NlpStatus::MaxIter, iter);
        }

        let viol0 = violation(&vals);
        if step.elastic {
            elastic_run += 1;
            if viol0 < 0.99 * best_violation {
                best_violation = viol0;
                elastic_run = elastic_run.min(1);
            }
            if elastic_run >= MAX_ELASTIC_ITERATIONS {
                return result(x, &vals, lam, mu, kkt, NlpStatus::InfeasibleDetected, iter);
            }
        } else {
            elastic_run = 0;
            best_violation = best_violation.min(viol0);
        }

        let mult_max = inf_norm(&step.lam).max(inf_norm(&step.mu));
        rho = rho.max(1.1 * mult_max + 1e-12);
        let mut dphi = ders.gradient.dot(&step.d) - rho * viol0;
        let curvature = step.d.dot(&(&h * &step.d));
        if dphi > -0.5 * curvature && viol0 > 0.0 {
            // Raise the penalty until the step is a descent direction.
            rho = rho.max((ders.gradient.dot(&step.d) + 0.5 * curvature) / viol0);
            dphi = ders.gradient.dot(&step.d) - rho * viol0;
        }
        let phi0 = vals.objective + rho * viol0;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let x_trial = &x + &step.d * alpha;
            let v = problem.values(&x_trial);
            let phi = v.objective + rho * violation(&v);
            if phi.is_finite() && phi <= phi0 + ARMIJO * alpha * dphi.min(0.0) {
                accepted = Some((x_trial, v));
                break;
            }
            // Near a solution the merit change drowns in rounding; the full
            // step is still taken when it halves the scaled KKT error.
            if alpha == 1.0 && !step.elastic && phi.is_finite() {
                let d_trial = problem.derivatives(&x_trial);
                let k_trial = Kkt::evaluate(&v, &d_trial, &step.lam, &step.mu);
                if k_trial.scaled_error(options) <= 0.5 * kkt.scaled_error(options) {
                    accepted = Some((x_trial, v));
                    break;
                }
            }
            let denom = 2.0 * (phi - phi0 - alpha * dphi);
            let interp = if denom > 0.0 && dphi < 0.0 && phi.is_finite() {
                -dphi * alpha * alpha / denom
            } else {
                0.5 * alpha
            };
            alpha = interp.clamp(0.1 * alpha, 0.5 * alpha);
        }

        let Some((x_new, vals_new)) = accepted else {
            if ders.hessian.is_none() && !bfgs_reset {
                bfgs = DMatrix::identity(n, n);
                bfgs_reset = true;
                continue;
            }
            return result(x, &vals, lam, mu, kkt, NlpStatus::LineSearchFailed, iter);
        };
        bfgs_reset = false;

        let ders_new = problem.derivatives(&x_new);
        let s = &x_new - &x;
        if ders_new.hessian.is_none() {
            let y = lagrangian_gradient(&ders_new, &lam, &mu) - lagrangian_gradient(&ders, &lam, &mu);
            damped_bfgs(&mut bfgs, &s, &y);
        }

        let small_step = inf_norm(&s) <= options.xtol * (1.0 + inf_norm(&x));
        let flat = (vals_new.objective - vals.objective).abs() <= options.ftol * (1.0 + vals.objective.abs());
        stagnant = if small_step && flat { stagnant + 1 } else { 0 };

        x = x_new;
        vals = vals_new;
        ders = ders_new;

        if stagnant >= 3 {
            let kkt = Kkt::evaluate(&vals, &ders, &lam, &mu);
            let status = if kkt.satisfied(options) {
                NlpStatus::Converged
            } else {
                NlpStatus::LineSearchFailed
            };
            return result(x, &vals, lam, mu, kkt, status, iter + 1);
        }
    }
    unreachable!("loop returns at iter == max_iter")
}

/// An [`NlpProblem`] assembled from closures, convenient for small problems.
pub struct FnProblem<'a> {
    pub dim: usize,
    pub objective: &'a dyn Fn(&DVector<f64>) -> f64,
    pub gradient: &'a dyn Fn(&DVector<f64>) -> DVector<f64>,
    pub eq: Option<(&'a dyn Fn(&DVector<f64>) -> DVector<f64>, &'a dyn Fn(&DVector<f64>) -> DMatrix<f64>)>,
    pub ineq: Option<(&'a dyn Fn(&DVector<f64>) -> DVector<f64>, &'a dyn Fn(&DVector<f64>) -> DMatrix<f64>)>,
}

impl NlpProblem for FnProblem<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn values(&self, x: &DVector<f64>) -> NlpValues {
        NlpValues {
            objective: (self.objective)(x),
            eq: self.eq.map_or_else(|| DVector::zeros(0), |(c, _)| c(x)),
            ineq: self.ineq.map_or_else(|| DVector::zeros(0), |(c, _)| c(x)),
        }
    }

    fn derivatives(&self, x: &DVector<f64>) -> NlpDerivatives {
        NlpDerivatives {
            gradient: (self.gradient)(x),
            eq_jacobian: self.eq.map_or_else(|| DMatrix::zeros(0, self.dim), |(_, j)| j(x)),
            ineq_jacobian: self.ineq.map_or_else(|| DMatrix::zeros(0, self.dim), |(_, j)| j(x)),
            hessian: None,
        }
    }
}
