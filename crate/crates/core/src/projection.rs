//! Galerkin and LSPG reduced-order models with optional constraints.
//!
//! Galerkin ROMs integrate `ẋ̂ = f̂(x̂, t)` with the configured scheme, where
//! `f̂` minimizes the time-continuous residual (subject to the Galerkin
//! constraint forms). Implicit schemes close the reduced O∆E with the
//! derivative-free hybrid root finder. LSPG ROMs minimize the time-discrete
//! residual per step (subject to the LSPG constraint forms).
//!
//! NLP objectives are divided by a data scale so `gtol` acts relative to the
//! problem: `max(1, ‖A‖_F ‖r‖₂)` at the warm start for least-squares
//! objectives `½‖r‖²` with Jacobian `A`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use crate::basis::{ReducedBasis, ReferenceState};
use crate::constraints::{ConstraintSet, GalerkinFrame};
use crate::error::{check_dim, Error, Result};
use crate::fom::{
    discrete_residual, discrete_residual_jacobian, history_sum, FullOrderModel,
    LinearMultistepScheme, ParamVector, StateHistory,
};
use crate::linalg::{inf_norm, least_squares};
use crate::solvers::{
    hybrid_root, solve_nlp, solve_nlp_outer, solve_qp, HybridOptions, NlpDerivatives, NlpProblem, NlpResult,
    NlpStatus, NlpValues, QpProblem, SolverOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Galerkin,
    Lspg,
}

#[derive(Debug)]
pub struct RomConfig {
    pub basis: ReducedBasis,
    pub x_ref: ReferenceState,
    pub scheme: LinearMultistepScheme,
    pub constraints: ConstraintSet,
    pub solver_options: SolverOptions,
    pub kind: ProjectionKind,
    /// A Galerkin kinematic inequality row is imposed when `d̄(x̃) ≤ activation_tol`.
    pub activation_tol: f64,
    pub hybrid: HybridOptions,
}

impl RomConfig {
    /// Unconstrained, `x_ref = x⁰`, default solver settings.
    pub fn new(basis: ReducedBasis, scheme: LinearMultistepScheme, kind: ProjectionKind) -> Self {
        Self {
            basis,
            x_ref: ReferenceState::default(),
            scheme,
            constraints: ConstraintSet::default(),
            solver_options: SolverOptions::default(),
            kind,
            activation_tol: 0.0,
            hybrid: HybridOptions::default(),
        }
    }

    pub fn with_constraints(mut self, constraints: ConstraintSet) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn with_solver_options(mut self, options: SolverOptions) -> Self {
        self.solver_options = options;
        self
    }

    pub fn with_reference(mut self, x_ref: ReferenceState) -> Self {
        self.x_ref = x_ref;
        self
    }

    fn check(&self, model: &dyn FullOrderModel) -> Result<()> {
        check_dim("basis rows", model.dim(), self.basis.dim())
    }
}

/// Per-step record. NLP fields are zero when no NLP was solved.
#[derive(Debug, Clone, PartialEq)]
pub struct RomStepDiagnostics {
    /// Root-finder evaluations (implicit Galerkin), Gauss–Newton or SQP
    /// iterations (LSPG).
    pub iterations: usize,
    /// `‖r̂_G‖₂` (Galerkin) or `‖rⁿ‖₂` (LSPG) at the accepted state.
    pub residual_norm: f64,
    pub nlp_status: Option<NlpStatus>,
    pub objective: f64,
    pub kkt_stationarity: f64,
    pub kkt_feasibility: f64,
    pub kkt_complementarity: f64,
    /// Equality rows plus inequality rows with a positive multiplier.
    pub active_constraints: usize,
}

impl RomStepDiagnostics {
    fn plain(iterations: usize, residual_norm: f64) -> Self {
        Self {
            iterations,
            residual_norm,
            nlp_status: None,
            objective: 0.0,
            kkt_stationarity: 0.0,
            kkt_feasibility: 0.0,
            kkt_complementarity: 0.0,
            active_constraints: 0,
        }
    }

    fn with_nlp(mut self, nlp: &NlpResult) -> Self {
        self.nlp_status = Some(nlp.status);
        self.objective = nlp.objective;
        self.kkt_stationarity = nlp.kkt_stationarity;
        self.kkt_feasibility = nlp.kkt_feasibility_eq.max(nlp.kkt_feasibility_ineq);
        self.kkt_complementarity = nlp.kkt_complementarity;
        self.active_constraints =
            nlp.multipliers_eq.len() + nlp.multipliers_ineq.iter().filter(|&&m| m > 0.0).count();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RomStatus {
    Completed,
    Failed { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    /// `x̂⁰ …`; shorter than `N_T + 1` if a step failed.
    pub coords: Vec<DVector<f64>>,
    /// Galerkin only: `f̂(x̂ⁿ, tⁿ)` for every stored step.
    pub velocities: Vec<DVector<f64>>,
    /// Diagnostics for steps `1..`.
    pub diagnostics: Vec<RomStepDiagnostics>,
    pub status: RomStatus,
}

impl ReducedTrajectory {
    pub fn completed(&self) -> bool {
        self.status == RomStatus::Completed
    }

    /// Decoded states `x_ref + Φ x̂ⁿ`.
    pub fn decode(&self, basis: &ReducedBasis, x_ref: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        self.coords.iter().map(|c| basis.decode(c, x_ref)).collect()
    }
}

fn ls_weight(jacobian: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    1.0 / (jacobian.norm() * r.norm()).max(1.0)
}

/// `Φᵀ f(x_ref + Φx̂, t; μ)`.
pub fn galerkin_velocity(
    model: &dyn FullOrderModel,
    basis: &ReducedBasis,
    x_ref: &DVector<f64>,
    x_hat: &DVector<f64>,
    t: f64,
    mu: &ParamVector,
) -> Result<DVector<f64>> {
    let x = basis.decode(x_hat, x_ref)?;
    Ok(basis.phi().tr_mul(&model.velocity(&x, t, mu)))
}

/// Output of the Galerkin velocity map.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySolve {
    pub v_hat: DVector<f64>,
    /// `None` when no constraint row was imposed and `v̂ = Φᵀf`.
    pub nlp: Option<NlpResult>,
}

impl VelocitySolve {
    pub fn converged(&self) -> bool {
        self.nlp.as_ref().is_none_or(|r| r.converged())
    }
}

struct GalerkinNlp<'a> {
    frame: &'a GalerkinFrame<'a>,
    phi: &'a DMatrix<f64>,
    f: DVector<f64>,
    weight: f64,
}

impl NlpProblem for GalerkinNlp<'_> {
    fn dim(&self) -> usize {
        self.phi.ncols()
    }

    fn values(&self, v_hat: &DVector<f64>) -> NlpValues {
        let r = self.phi * v_hat - &self.f;
        let e = self.frame.eval(v_hat).expect("dimensions checked");
        NlpValues {
            objective: 0.5 * self.weight * r.norm_squared(),
            eq: e.equalities().values,
            ineq: e.active_inequalities().values,
        }
    }

    fn derivatives(&self, v_hat: &DVector<f64>) -> NlpDerivatives {
        let r = self.phi * v_hat - &self.f;
        let e = self.frame.eval(v_hat).expect("dimensions checked");
        NlpDerivatives {
            gradient: self.phi.tr_mul(&r) * self.weight,
            eq_jacobian: e.equalities().jacobian,
            ineq_jacobian: e.active_inequalities().jacobian,
            hessian: Some(self.phi.tr_mul(self.phi) * self.weight),
        }
    }
}

/// Minimizer of `½‖Φv̂ − f(x̃, t)‖²` subject to the Galerkin constraint forms
/// at `x̃ = x_ref + Φx̂`, warm-started from `warm`.
#[allow(clippy::too_many_arguments)]
pub fn constrained_galerkin_velocity(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    x_ref: &DVector<f64>,
    x_hat: &DVector<f64>,
    t: f64,
    mu: &ParamVector,
    warm: Option<&DVector<f64>>,
) -> Result<VelocitySolve> {
    velocity_with_cuts(model, config, x_ref, x_hat, t, mu, warm, &[])
}

#[allow(clippy::too_many_arguments)]
fn velocity_with_cuts(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    x_ref: &DVector<f64>,
    x_hat: &DVector<f64>,
    t: f64,
    mu: &ParamVector,
    warm: Option<&DVector<f64>>,
    cut_states: &[DVector<f64>],
) -> Result<VelocitySolve> {
    let basis = &config.basis;
    let frame = GalerkinFrame::new(
        &config.constraints,
        model,
        basis,
        x_ref,
        x_hat,
        t,
        mu,
        config.activation_tol,
    )?
    .with_cut_states(cut_states);
    let f = model.velocity(frame.state(), t, mu);
    let unconstrained = basis.phi().tr_mul(&f);
    if frame.counts() == (0, 0) {
        return Ok(VelocitySolve {
            v_hat: unconstrained,
            nlp: None,
        });
    }
    if let Some(solve) = affine_velocity_qp(&frame, basis.phi(), &f, &unconstrained)? {
        return Ok(solve);
    }
    let start = warm
        .filter(|w| w.len() == basis.p())
        .cloned()
        .unwrap_or_else(|| unconstrained.clone());
    let problem = GalerkinNlp {
        frame: &frame,
        phi: basis.phi(),
        weight: ls_weight(basis.phi(), &(basis.phi() * &start - &f)),
        f,
    };
    let nlp = solve_nlp(&problem, &config.solver_options.with_warm_start(start));
    Ok(VelocitySolve {
        v_hat: nlp.point.clone(),
        nlp: Some(nlp),
    })
}

/// The Galerkin forms of the built-in constraint families are affine in `v̂`,
/// so the velocity problem is a convex QP and is solved directly. Returns
/// `None` (use the NLP) if the rows are not affine or the QP fails.
fn affine_velocity_qp(
    frame: &GalerkinFrame<'_>,
    phi: &DMatrix<f64>,
    f: &DVector<f64>,
    phi_t_f: &DVector<f64>,
) -> Result<Option<VelocitySolve>> {
    let p = phi.ncols();
    let at_zero = frame.eval(&DVector::zeros(p))?;
    let (eq, ineq) = (at_zero.equalities(), at_zero.active_inequalities());
    let hessian = phi.tr_mul(phi);
    let gradient = -phi_t_f;
    let Ok(sol) = solve_qp(&QpProblem {
        hessian: &hessian,
        gradient: &gradient,
        eq_matrix: &eq.jacobian,
        eq_offset: &eq.values,
        ineq_matrix: &ineq.jacobian,
        ineq_offset: &ineq.values,
    }) else {
        return Ok(None);
    };
    let v = sol.x;
    let at_v = frame.eval(&v)?;
    let (eq_v, ineq_v) = (at_v.equalities(), at_v.active_inequalities());
    let affine = |b0: &crate::constraints::Block, b1: &crate::constraints::Block| {
        let scale = 1.0 + b0.values.amax() + (b0.jacobian.abs() * v.abs()).amax();
        (&b0.jacobian - &b1.jacobian).amax() <= 1e-12 * (1.0 + b0.jacobian.amax())
            && (&b0.values + &b0.jacobian * &v - &b1.values).amax() <= 1e-10 * scale
    };
    if !affine(&eq, &eq_v) || !affine(&ineq, &ineq_v) {
        return Ok(None);
    }
    let r = phi * &v - f;
    let mut grad_l = phi.tr_mul(&r);
    if !eq_v.is_empty() {
        grad_l -= eq_v.jacobian.tr_mul(&sol.multipliers_eq);
    }
    if !ineq_v.is_empty() {
        grad_l -= ineq_v.jacobian.tr_mul(&sol.multipliers_ineq);
    }
    let nlp = NlpResult {
        point: v.clone(),
        objective: 0.5 * r.norm_squared(),
        kkt_stationarity: inf_norm(&grad_l),
        kkt_feasibility_eq: inf_norm(&eq_v.values),
        kkt_feasibility_ineq: ineq_v.values.iter().fold(0.0f64, |m, g| m.max(-g)),
        kkt_complementarity: sol
            .multipliers_ineq
            .iter()
            .zip(ineq_v.values.iter())
            .fold(0.0f64, |m, (u, g)| m.max((u * g).abs())),
        multipliers_eq: sol.multipliers_eq,
        multipliers_ineq: sol.multipliers_ineq,
        status: NlpStatus::Converged,
        iterations: 1,
    };
    Ok(Some(VelocitySolve {
        v_hat: v,
        nlp: Some(nlp),
    }))
}

/// Galerkin velocity through the configured constraint set (plain `Φᵀf` when
/// the set is empty).
fn velocity_map(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    x_ref: &DVector<f64>,
    x_hat: &DVector<f64>,
    t: f64,
    mu: &ParamVector,
    warm: Option<&DVector<f64>>,
) -> Result<VelocitySolve> {
    if config.constraints.is_empty() {
        return Ok(VelocitySolve {
            v_hat: galerkin_velocity(model, &config.basis, x_ref, x_hat, t, mu)?,
            nlp: None,
        });
    }
    constrained_galerkin_velocity(model, config, x_ref, x_hat, t, mu, warm)
}

/// The configured Galerkin velocity map `f̂(x̂, t)`; a non-converged inner
/// NLP is an error.
pub fn velocity_map_at(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    x_ref: &DVector<f64>,
    x_hat: &DVector<f64>,
    t: f64,
    mu: &ParamVector,
    warm: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let v = velocity_map(model, config, x_ref, x_hat, t, mu, warm)?;
    match v.nlp {
        Some(nlp) if !nlp.converged() => Err(Error::InvalidArgument(format!(
            "Galerkin velocity NLP stopped with {:?} at t = {t}",
            nlp.status
        ))),
        _ => Ok(v.v_hat),
    }
}

fn step_failure(step: usize, reason: impl Into<String>) -> Error {
    Error::StepFailure {
        step,
        reason: reason.into(),
    }
}

/// Outcome of one reduced time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x_hat: DVector<f64>,
    pub diagnostics: RomStepDiagnostics,
}

/// One Galerkin step. `history` holds `x̂ⁿ⁻ʲ` with cached `f̂(x̂ⁿ⁻ʲ, tⁿ⁻ʲ)`;
/// `warm` is the most recent inner solution and is updated.
pub fn galerkin_step(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    x_ref: &DVector<f64>,
    history: &StateHistory,
    n: usize,
    mu: &ParamVector,
    warm: &mut Option<DVector<f64>>,
) -> Result<StepOutcome> {
    let scheme = &config.scheme;
    let h = history_sum(scheme, history, 1)?;
    let a0 = scheme.alpha()[0];
    if scheme.is_explicit() {
        return Ok(StepOutcome {
            x_hat: h / -a0,
            diagnostics: RomStepDiagnostics::plain(0, 0.0),
        });
    }
    let t = scheme.time(n);
    let c0 = scheme.dt() * scheme.beta()[0];
    let solve = |cut_states: &[DVector<f64>], x_init: DVector<f64>, warm: &mut Option<DVector<f64>>| {
        let inner_warm = RefCell::new(warm.clone());
        let failure = RefCell::new(None);
        let residual = |xi: &DVector<f64>| {
            let w = inner_warm.borrow().clone();
            let v = if config.constraints.is_empty() {
                velocity_map(model, config, x_ref, xi, t, mu, w.as_ref())
            } else {
                velocity_with_cuts(model, config, x_ref, xi, t, mu, w.as_ref(), cut_states)
            };
            match v {
                Ok(v) => {
                    let mut r = &h + xi * a0;
                    r.axpy(-c0, &v.v_hat, 1.0);
                    *inner_warm.borrow_mut() = Some(v.v_hat);
                    r
                }
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    DVector::from_element(xi.len(), f64::NAN)
                }
            }
        };
        let out = hybrid_root(residual, x_init, &config.hybrid);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        *warm = inner_warm.into_inner();
        if !out.converged() {
            return Err(step_failure(
                n,
                format!(
                    "hybrid root finder stopped with {:?} after {} evaluations (|r| = {:e})",
                    out.status, out.nfev, out.residual_norm
                ),
            ));
        }
        Ok(out)
    };
    if !config.constraints.has_dynamic_cuts() {
        let out = solve(&[], history.state(1).clone(), warm)?;
        return Ok(StepOutcome {
            x_hat: out.x,
            diagnostics: RomStepDiagnostics::plain(out.nfev, out.residual_norm),
        });
    }
    // Rows whose piece jumps with the state make the step map discontinuous.
    // They are frozen at x̃ⁿ⁻¹ and at each root whose own piece is violated,
    // until the root satisfies its own piece.
    let mut cut_states = alloc::vec![config.basis.decode(history.state(1), x_ref)?];
    let mut x_init = history.state(1).clone();
    let mut nfev = 0;
    for _ in 0..MAX_CUT_ROUNDS {
        let out = solve(&cut_states, x_init, warm)?;
        nfev += out.nfev;
        let v_hat = (&h + &out.x * a0) / c0;
        let e = config.constraints.eval_galerkin(
            model,
            &config.basis,
            x_ref,
            &v_hat,
            &out.x,
            t,
            mu,
            config.activation_tol,
        )?;
        let tol = config.solver_options.constraint_tol;
        let eq = e.equalities().values;
        let ineq = e.active_inequalities().values;
        if eq.iter().all(|c| c.abs() <= tol) && ineq.iter().all(|&d| d >= -tol) {
            return Ok(StepOutcome {
                x_hat: out.x,
                diagnostics: RomStepDiagnostics::plain(nfev, out.residual_norm),
            });
        }
        cut_states.push(config.basis.decode(&out.x, x_ref)?);
        x_init = out.x;
    }
    Err(step_failure(
        n,
        format!("no root satisfied its own constraint piece after {MAX_CUT_ROUNDS} rounds"),
    ))
}

const MAX_CUT_ROUNDS: usize = 20;

/// Reduced residual Jacobian `(∂rⁿ/∂ξ) Φ` and residual at `x_ref + Φξ̂`.
#[allow(clippy::too_many_arguments)]
fn lspg_linearization(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    x_ref: &DVector<f64>,
    history: &StateHistory,
    xi: &DVector<f64>,
    n: usize,
    mu: &ParamVector,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let x = config.basis.decode(xi, x_ref)?;
    let r = discrete_residual(model, &config.scheme, history, &x, n, mu)?;
    let jphi = discrete_residual_jacobian(model, &config.scheme, &x, n, mu).mul_dense(config.basis.phi());
    Ok((r, jphi))
}

/// Minimizes `½‖rⁿ(x_ref + Φξ̂)‖²` by Gauss–Newton from `x̂ⁿ⁻¹`. `history`
/// holds decoded states with their velocities.
#[allow(clippy::too_many_arguments)]
pub fn lspg_step_unconstrained(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    x_ref: &DVector<f64>,
    history: &StateHistory,
    x_hat_prev: &DVector<f64>,
    n: usize,
    mu: &ParamVector,
) -> Result<StepOutcome> {
    let scheme = &config.scheme;
    let phi = config.basis.phi();
    let opts = &config.solver_options;
    let mut xi = x_hat_prev.clone();
    if scheme.is_explicit() && scheme.k() == 1 {
        // The minimizer is Φᵀ(x̃ⁿ − x_ref) with x̃ⁿ the full explicit update.
        // Since x̃ⁿ⁻¹ = x_ref + Φx̂ⁿ⁻¹ this is formed in reduced coordinates,
        // which avoids cancelling against x_ref.
        let mut reduced = StateHistory::new(1);
        reduced.push_with_velocity(xi, phi.tr_mul(history.velocity(1)), history.time(1));
        let xi = history_sum(scheme, &reduced, 1)? / -scheme.alpha()[0];
        let x = config.basis.decode(&xi, x_ref)?;
        let r = discrete_residual(model, scheme, history, &x, n, mu)?;
        return Ok(StepOutcome {
            x_hat: xi,
            diagnostics: RomStepDiagnostics::plain(1, r.norm()),
        });
    }
    if scheme.is_explicit() {
        // rⁿ is affine with Jacobian α₀ I; Φ has orthonormal columns.
        let x = config.basis.decode(&xi, x_ref)?;
        let r = discrete_residual(model, scheme, history, &x, n, mu)?;
        xi -= phi.tr_mul(&r) / scheme.alpha()[0];
        let x = config.basis.decode(&xi, x_ref)?;
        let r = discrete_residual(model, scheme, history, &x, n, mu)?;
        return Ok(StepOutcome {
            x_hat: xi,
            diagnostics: RomStepDiagnostics::plain(1, r.norm()),
        });
    }
    let mut weight = None;
    for it in 0..=opts.max_iter {
        let (r, jphi) = lspg_linearization(model, config, x_ref, history, &xi, n, mu)?;
        let g = inf_norm(&jphi.tr_mul(&r));
        let w = *weight.get_or_insert_with(|| ls_weight(&jphi, &r));
        if w * g <= opts.gtol {
            return Ok(StepOutcome {
                x_hat: xi,
                diagnostics: RomStepDiagnostics::plain(it, r.norm()),
            });
        }
        if it == opts.max_iter {
            break;
        }
        let delta = least_squares(&jphi, &-&r).map_err(|e| step_failure(n, format!("{e}")))?;
        xi += &delta;
        if inf_norm(&delta) <= opts.xtol * (1.0 + inf_norm(&xi)) {
            let (r, _) = lspg_linearization(model, config, x_ref, history, &xi, n, mu)?;
            return Ok(StepOutcome {
                x_hat: xi,
                diagnostics: RomStepDiagnostics::plain(it + 1, r.norm()),
            });
        }
    }
    Err(step_failure(
        n,
        format!("Gauss–Newton did not converge in {} iterations", opts.max_iter),
    ))
}

struct LspgNlp<'a> {
    model: &'a dyn FullOrderModel,
    config: &'a RomConfig,
    x_ref: &'a DVector<f64>,
    history: &'a StateHistory,
    n: usize,
    mu: &'a ParamVector,
    weight: f64,
}

impl NlpProblem for LspgNlp<'_> {
    fn dim(&self) -> usize {
        self.config.basis.p()
    }

    fn values(&self, xi: &DVector<f64>) -> NlpValues {
        let c = &self.config;
        let x = c.basis.decode(xi, self.x_ref).expect("dimensions checked");
        let r = discrete_residual(self.model, &c.scheme, self.history, &x, self.n, self.mu)
            .expect("history checked");
        let e = c
            .constraints
            .eval_lspg(self.model, &c.basis, self.x_ref, &c.scheme, self.history, xi, self.n, self.mu)
            .expect("history checked");
        NlpValues {
            objective: 0.5 * self.weight * r.norm_squared(),
            eq: e.equalities().values,
            ineq: e.inequalities().values,
        }
    }

    fn derivatives(&self, xi: &DVector<f64>) -> NlpDerivatives {
        let c = &self.config;
        let (r, jphi) = lspg_linearization(self.model, c, self.x_ref, self.history, xi, self.n, self.mu)
            .expect("history checked");
        let e = c
            .constraints
            .eval_lspg(self.model, &c.basis, self.x_ref, &c.scheme, self.history, xi, self.n, self.mu)
            .expect("history checked");
        NlpDerivatives {
            gradient: jphi.tr_mul(&r) * self.weight,
            eq_jacobian: e.equalities().jacobian,
            ineq_jacobian: e.inequalities().jacobian,
            hessian: Some(jphi.tr_mul(&jphi) * self.weight),
        }
    }
}

/// Constrained LSPG step: SQP on `½‖rⁿ‖²` with a Gauss–Newton Hessian,
/// warm-started at `x̂ⁿ⁻¹`. Rows flagged by [`ConstraintSet::lspg_cut_rows`]
/// are imposed through accumulated linearization cuts.
#[allow(clippy::too_many_arguments)]
pub fn lspg_step_constrained(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    x_ref: &DVector<f64>,
    history: &StateHistory,
    x_hat_prev: &DVector<f64>,
    n: usize,
    mu: &ParamVector,
) -> Result<StepOutcome> {
    if config.constraints.is_empty() {
        return lspg_step_unconstrained(model, config, x_ref, history, x_hat_prev, n, mu);
    }
    // Surface history and dimension errors before the solver's closures run.
    config
        .constraints
        .eval_lspg(model, &config.basis, x_ref, &config.scheme, history, x_hat_prev, n, mu)?;
    let (r_prev, j_prev) = lspg_linearization(model, config, x_ref, history, x_hat_prev, n, mu)?;
    let problem = LspgNlp {
        model,
        config,
        x_ref,
        history,
        n,
        mu,
        weight: ls_weight(&j_prev, &r_prev),
    };
    let nlp = solve_nlp_outer(
        &problem,
        &config.constraints.lspg_cut_rows(),
        &config.solver_options.with_warm_start(x_hat_prev.clone()),
    );
    if !nlp.converged() {
        return Err(step_failure(
            n,
            format!(
                "SQP stopped with {:?} after {} iterations (stationarity {:e}, infeasibility {:e})",
                nlp.status,
                nlp.iterations,
                nlp.kkt_stationarity,
                nlp.kkt_feasibility_eq.max(nlp.kkt_feasibility_ineq)
            ),
        ));
    }
    let x = config.basis.decode(&nlp.point, x_ref)?;
    let r = discrete_residual(model, &config.scheme, history, &x, n, mu)?;
    Ok(StepOutcome {
        x_hat: nlp.point.clone(),
        diagnostics: RomStepDiagnostics::plain(nlp.iterations, r.norm()).with_nlp(&nlp),
    })
}

/// Runs the ROM from `x̂⁰ = Φᵀ(x⁰(μ) − x_ref(μ))`; `k = 1` schemes only (use
/// [`simulate_rom_from_history`] otherwise).
pub fn simulate_rom(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    mu: &ParamVector,
) -> Result<ReducedTrajectory> {
    config.check(model)?;
    model.check_params(mu)?;
    if config.scheme.k() != 1 {
        return Err(Error::InsufficientHistory {
            needed: config.scheme.k(),
            have: 1,
        });
    }
    let x_ref = config.x_ref.eval(model, mu);
    let x0 = config.basis.encode(&model.initial_state(mu), &x_ref)?;
    simulate_rom_from_history(model, config, mu, &[x0])
}

/// Runs the ROM from user-provided `x̂⁰ … x̂^{k−1}`. A step failure ends the
/// run; the partial trajectory is returned with [`RomStatus::Failed`].
pub fn simulate_rom_from_history(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    mu: &ParamVector,
    start: &[DVector<f64>],
) -> Result<ReducedTrajectory> {
    config.check(model)?;
    let scheme = &config.scheme;
    let k = scheme.k();
    if start.len() < k {
        return Err(Error::InsufficientHistory {
            needed: k,
            have: start.len(),
        });
    }
    let basis = &config.basis;
    let x_ref = config.x_ref.eval(model, mu);
    let galerkin = config.kind == ProjectionKind::Galerkin;
    let mut traj = ReducedTrajectory {
        times: Vec::with_capacity(scheme.n_steps() + 1),
        coords: Vec::with_capacity(scheme.n_steps() + 1),
        velocities: Vec::new(),
        diagnostics: Vec::with_capacity(scheme.n_steps()),
        status: RomStatus::Completed,
    };
    let mut reduced = StateHistory::new(k);
    let mut full = StateHistory::new(k);
    let mut warm: Option<DVector<f64>> = None;

    // Records an accepted state; Galerkin runs also evaluate f̂ there.
    let accept = |n: usize,
                      x_hat: DVector<f64>,
                      traj: &mut ReducedTrajectory,
                      reduced: &mut StateHistory,
                      full: &mut StateHistory,
                      warm: &mut Option<DVector<f64>>|
     -> Result<Option<String>> {
        let t = scheme.time(n);
        if galerkin {
            let v = velocity_map(model, config, &x_ref, &x_hat, t, mu, warm.as_ref())?;
            if !v.converged() {
                let nlp = v.nlp.as_ref().expect("non-converged implies an NLP");
                return Ok(Some(format!(
                    "Galerkin velocity NLP stopped with {:?} (stationarity {:e}, infeasibility {:e})",
                    nlp.status,
                    nlp.kkt_stationarity,
                    nlp.kkt_feasibility_eq.max(nlp.kkt_feasibility_ineq)
                )));
            }
            if let (Some(nlp), Some(d)) = (v.nlp.as_ref(), traj.diagnostics.last_mut()) {
                if n > 0 {
                    *d = d.clone().with_nlp(nlp);
                }
            }
            *warm = Some(v.v_hat.clone());
            reduced.push_with_velocity(x_hat.clone(), v.v_hat.clone(), t);
            traj.velocities.push(v.v_hat);
        } else {
            full.push(model, basis.decode(&x_hat, &x_ref)?, t, mu);
        }
        traj.times.push(t);
        traj.coords.push(x_hat);
        Ok(None)
    };

    for (n, s) in start.iter().enumerate() {
        check_dim("start coordinates", basis.p(), s.len())?;
        if n > 0 {
            traj.diagnostics.push(RomStepDiagnostics::plain(0, 0.0));
        }
        if let Some(reason) = accept(n, s.clone(), &mut traj, &mut reduced, &mut full, &mut warm)? {
            traj.status = RomStatus::Failed { step: n, reason };
            return Ok(traj);
        }
    }

    for n in start.len()..=scheme.n_steps() {
        let prev = traj.coords.last().expect("start is non-empty").clone();
        let outcome = match config.kind {
            ProjectionKind::Galerkin => galerkin_step(model, config, &x_ref, &reduced, n, mu, &mut warm),
            ProjectionKind::Lspg => lspg_step_constrained(model, config, &x_ref, &full, &prev, n, mu),
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(Error::StepFailure { step, reason }) => {
                traj.status = RomStatus::Failed { step, reason };
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        if outcome.x_hat.iter().any(|v| !v.is_finite()) {
            traj.status = RomStatus::Failed {
                step: n,
                reason: "non-finite reduced state".into(),
            };
            return Ok(traj);
        }
        traj.diagnostics.push(outcome.diagnostics);
        if let Some(reason) = accept(n, outcome.x_hat, &mut traj, &mut reduced, &mut full, &mut warm)? {
            traj.status = RomStatus::Failed { step: n, reason };
            return Ok(traj);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests;
