//! Kinematic and dynamic constraint templates and their Galerkin and LSPG
//! reductions.
//!
//! Four families are supported: kinematic equalities `c̄(ξ, τ) = 0`, dynamic
//! equalities `c(v, ξ, τ) = 0`, and the matching inequalities `d̄ ≥ 0`,
//! `d ≥ 0`. Jacobians are dense with one row per constraint.

pub mod families;
pub mod tv;

use alloc::boxed::Box;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::basis::ReducedBasis;
use crate::error::{check_dim, Result};
use crate::fom::{discrete_velocity, FullOrderModel, LinearMultistepScheme, ParamVector, StateHistory};

pub use families::{EnergyConservation, Rsum, Tvb, Tvd};
pub use tv::{ec_value, sgn, total_variation, tv_subgradient, tvb_value, tvd_value};

/// Where a constraint is evaluated: a full state at a time, for a model and
/// parameter.
#[derive(Clone, Copy)]
pub struct EvalPoint<'a> {
    pub model: &'a dyn FullOrderModel,
    pub state: &'a DVector<f64>,
    pub time: f64,
    pub mu: &'a ParamVector,
}

/// `c̄(ξ, τ; ν)` or `d̄(ξ, τ; ν)`.
pub trait KinematicConstraint: Send + Sync {
    fn len(&self) -> usize;
    fn value(&self, at: &EvalPoint) -> DVector<f64>;
    /// `∂/∂ξ`, `len × N`.
    fn state_jacobian(&self, at: &EvalPoint) -> DMatrix<f64>;
    /// `∂/∂τ`; zero for autonomous constraints.
    fn time_derivative(&self, _at: &EvalPoint) -> DVector<f64> {
        DVector::zeros(self.len())
    }
    /// True if every row is concave in `ξ`, which lets solvers keep earlier
    /// linearizations as valid relaxations.
    fn is_concave(&self) -> bool {
        false
    }
}

/// `c(v, ξ, τ; ν)` or `d(v, ξ, τ; ν)`.
pub trait DynamicConstraint: Send + Sync {
    fn len(&self) -> usize;
    fn value(&self, v: &DVector<f64>, at: &EvalPoint) -> DVector<f64>;
    /// `∂/∂v`, `len × N`.
    fn velocity_jacobian(&self, v: &DVector<f64>, at: &EvalPoint) -> DMatrix<f64>;
    /// `∂/∂ξ`, `len × N`.
    fn state_jacobian(&self, v: &DVector<f64>, at: &EvalPoint) -> DMatrix<f64>;
    /// When true the LSPG form is multiplied by `Δt β_q`, which turns a
    /// residual-based constraint into one on `rⁿ` itself.
    fn lspg_scaled_by_step(&self) -> bool {
        false
    }
    /// True if the rows are piecewise smooth in the state with jumps between
    /// pieces (e.g. sign patterns taken at the unknown state). LSPG solvers
    /// then impose linearizations collected at earlier iterates as cuts, and
    /// implicit Galerkin steps evaluate the rows at a set of frozen states.
    fn use_cuts(&self) -> bool {
        false
    }
}

/// The four constraint families; any may be empty.
#[derive(Default)]
pub struct ConstraintSet {
    pub kin_eq: Vec<Box<dyn KinematicConstraint>>,
    pub dyn_eq: Vec<Box<dyn DynamicConstraint>>,
    pub kin_ineq: Vec<Box<dyn KinematicConstraint>>,
    pub dyn_ineq: Vec<Box<dyn DynamicConstraint>>,
}

impl core::fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ConstraintSet")
            .field("kin_eq", &self.n_kin_eq())
            .field("dyn_eq", &self.n_dyn_eq())
            .field("kin_ineq", &self.n_kin_ineq())
            .field("dyn_ineq", &self.n_dyn_ineq())
            .finish()
    }
}

fn rows_kin(list: &[Box<dyn KinematicConstraint>]) -> usize {
    list.iter().map(|c| c.len()).sum()
}

fn rows_dyn(list: &[Box<dyn DynamicConstraint>]) -> usize {
    list.iter().map(|c| c.len()).sum()
}

/// Values and Jacobians of one constraint family in reduced form.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub values: DVector<f64>,
    /// `rows × p`.
    pub jacobian: DMatrix<f64>,
}

impl Block {
    fn with_rows(rows: usize, p: usize) -> Self {
        Self {
            values: DVector::zeros(rows),
            jacobian: DMatrix::zeros(rows, p),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn set(&mut self, row: usize, values: &DVector<f64>, jacobian: &DMatrix<f64>) {
        self.values.rows_mut(row, values.len()).copy_from(values);
        self.jacobian.rows_mut(row, jacobian.nrows()).copy_from(jacobian);
    }

    /// Stacks blocks vertically, keeping only rows where `keep` is true.
    pub fn stack(blocks: &[(&Block, Option<&[bool]>)], p: usize) -> Block {
        let count: usize = blocks
            .iter()
            .map(|(b, keep)| keep.map_or(b.len(), |k| k.iter().filter(|&&x| x).count()))
            .sum();
        let mut out = Block::with_rows(count, p);
        let mut r = 0;
        for (b, keep) in blocks {
            for i in 0..b.len() {
                if keep.is_some_and(|k| !k[i]) {
                    continue;
                }
                out.values[r] = b.values[i];
                out.jacobian.set_row(r, &b.jacobian.row(i));
                r += 1;
            }
        }
        out
    }
}

/// Galerkin constraint forms at `(v̂, ξ̂, τ)`, Jacobians w.r.t. `v̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinConstraintEval {
    /// `c̄_G = (∂c̄/∂ξ)(x̃) Φ v̂ + ∂c̄/∂τ(x̃)`.
    pub kin_eq: Block,
    /// `c_G = c(Φv̂, x̃, τ)`.
    pub dyn_eq: Block,
    /// `d̄_G`, every row; see `kin_ineq_active`.
    pub kin_ineq: Block,
    /// Row `i` of `d̄_G` is imposed iff `d̄_i(x̃) ≤ activation_tol`.
    pub kin_ineq_active: Vec<bool>,
    pub dyn_ineq: Block,
}

impl GalerkinConstraintEval {
    /// All equality rows.
    pub fn equalities(&self) -> Block {
        let p = self.kin_eq.jacobian.ncols();
        Block::stack(&[(&self.kin_eq, None), (&self.dyn_eq, None)], p)
    }

    /// Active kinematic inequality rows followed by the dynamic ones.
    pub fn active_inequalities(&self) -> Block {
        let p = self.kin_eq.jacobian.ncols();
        Block::stack(
            &[
                (&self.kin_ineq, Some(&self.kin_ineq_active)),
                (&self.dyn_ineq, None),
            ],
            p,
        )
    }
}

/// Everything about a Galerkin evaluation that depends only on `(ξ̂, τ)`:
/// the decoded state, and the kinematic families, which are affine in `v̂`.
pub struct GalerkinFrame<'a> {
    set: &'a ConstraintSet,
    model: &'a dyn FullOrderModel,
    basis: &'a ReducedBasis,
    mu: &'a ParamVector,
    time: f64,
    state: DVector<f64>,
    /// `(∂c̄/∂ξ)Φ` and `∂c̄/∂τ`.
    kin_eq: (DMatrix<f64>, DVector<f64>),
    kin_ineq: (DMatrix<f64>, DVector<f64>),
    kin_ineq_active: Vec<bool>,
    /// When non-empty, dynamic rows with [`DynamicConstraint::use_cuts`] are
    /// evaluated at each of these states instead of at `state`.
    cut_states: Vec<DVector<f64>>,
}

impl<'a> GalerkinFrame<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        set: &'a ConstraintSet,
        model: &'a dyn FullOrderModel,
        basis: &'a ReducedBasis,
        x_ref: &DVector<f64>,
        xi_hat: &DVector<f64>,
        tau: f64,
        mu: &'a ParamVector,
        activation_tol: f64,
    ) -> Result<Self> {
        check_dim("Galerkin basis", model.dim(), basis.dim())?;
        let state = basis.decode(xi_hat, x_ref)?;
        let at = EvalPoint {
            model,
            state: &state,
            time: tau,
            mu,
        };
        let p = basis.p();
        let lin = |list: &[Box<dyn KinematicConstraint>]| {
            let rows = rows_kin(list);
            let mut a = DMatrix::zeros(rows, p);
            let mut b = DVector::zeros(rows);
            let mut vals = DVector::zeros(rows);
            let mut r = 0;
            for c in list {
                let n = c.len();
                a.rows_mut(r, n).copy_from(&(c.state_jacobian(&at) * basis.phi()));
                b.rows_mut(r, n).copy_from(&c.time_derivative(&at));
                vals.rows_mut(r, n).copy_from(&c.value(&at));
                r += n;
            }
            (a, b, vals)
        };
        let (ae, be, _) = lin(&set.kin_eq);
        let (ai, bi, di) = lin(&set.kin_ineq);
        let kin_ineq_active = di.iter().map(|&d| d <= activation_tol).collect();
        Ok(Self {
            set,
            model,
            basis,
            mu,
            time: tau,
            state,
            kin_eq: (ae, be),
            kin_ineq: (ai, bi),
            kin_ineq_active,
            cut_states: Vec::new(),
        })
    }

    pub fn with_cut_states(mut self, states: &[DVector<f64>]) -> Self {
        self.cut_states = states.to_vec();
        self
    }

    fn rows_dyn(&self, list: &[Box<dyn DynamicConstraint>]) -> usize {
        list.iter()
            .map(|c| c.len() * self.copies(c.as_ref()))
            .sum()
    }

    fn copies(&self, c: &dyn DynamicConstraint) -> usize {
        if c.use_cuts() && !self.cut_states.is_empty() {
            self.cut_states.len()
        } else {
            1
        }
    }

    /// `x̃ = x_ref + Φξ̂`.
    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    pub fn kin_ineq_active(&self) -> &[bool] {
        &self.kin_ineq_active
    }

    /// Number of equality rows and of imposed inequality rows.
    pub fn counts(&self) -> (usize, usize) {
        let active = self.kin_ineq_active.iter().filter(|&&a| a).count();
        (
            self.kin_eq.1.len() + self.rows_dyn(&self.set.dyn_eq),
            active + self.rows_dyn(&self.set.dyn_ineq),
        )
    }

    pub fn eval(&self, v_hat: &DVector<f64>) -> Result<GalerkinConstraintEval> {
        let p = self.basis.p();
        check_dim("Galerkin velocity", p, v_hat.len())?;
        let v = self.basis.phi() * v_hat;
        let at = EvalPoint {
            model: self.model,
            state: &self.state,
            time: self.time,
            mu: self.mu,
        };
        let affine = |(a, b): &(DMatrix<f64>, DVector<f64>)| Block {
            values: a * v_hat + b,
            jacobian: a.clone(),
        };
        let dynamic = |list: &[Box<dyn DynamicConstraint>]| {
            let mut out = Block::with_rows(self.rows_dyn(list), p);
            let mut r = 0;
            for c in list {
                let points: Vec<EvalPoint> = if c.use_cuts() && !self.cut_states.is_empty() {
                    self.cut_states.iter().map(|state| EvalPoint { state, ..at }).collect()
                } else {
                    alloc::vec![at]
                };
                for at in &points {
                    let jac = c.velocity_jacobian(&v, at) * self.basis.phi();
                    out.set(r, &c.value(&v, at), &jac);
                    r += c.len();
                }
            }
            out
        };
        Ok(GalerkinConstraintEval {
            kin_eq: affine(&self.kin_eq),
            dyn_eq: dynamic(&self.set.dyn_eq),
            kin_ineq: affine(&self.kin_ineq),
            kin_ineq_active: self.kin_ineq_active.clone(),
            dyn_ineq: dynamic(&self.set.dyn_ineq),
        })
    }
}

/// LSPG constraint forms at step `n`, Jacobians w.r.t. `ξ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct LspgConstraintEval {
    pub kin_eq: Block,
    pub dyn_eq: Block,
    pub kin_ineq: Block,
    pub dyn_ineq: Block,
}

impl LspgConstraintEval {
    pub fn equalities(&self) -> Block {
        let p = self.kin_eq.jacobian.ncols();
        Block::stack(&[(&self.kin_eq, None), (&self.dyn_eq, None)], p)
    }

    pub fn inequalities(&self) -> Block {
        let p = self.kin_eq.jacobian.ncols();
        Block::stack(&[(&self.kin_ineq, None), (&self.dyn_ineq, None)], p)
    }
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.n_kin_eq() + self.n_dyn_eq() + self.n_kin_ineq() + self.n_dyn_ineq() == 0
    }

    pub fn n_kin_eq(&self) -> usize {
        rows_kin(&self.kin_eq)
    }

    pub fn n_dyn_eq(&self) -> usize {
        rows_dyn(&self.dyn_eq)
    }

    pub fn n_kin_ineq(&self) -> usize {
        rows_kin(&self.kin_ineq)
    }

    pub fn n_dyn_ineq(&self) -> usize {
        rows_dyn(&self.dyn_ineq)
    }

    /// True if some dynamic row asks for [`DynamicConstraint::use_cuts`].
    pub fn has_dynamic_cuts(&self) -> bool {
        self.dyn_eq.iter().chain(&self.dyn_ineq).any(|c| c.use_cuts())
    }

    /// Per LSPG inequality row (kinematic rows first): whether the solver
    /// should handle it with accumulated linearization cuts. Concave
    /// kinematic rows and dynamic rows asking for it are flagged.
    pub fn lspg_cut_rows(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.n_kin_ineq() + self.n_dyn_ineq());
        for c in &self.kin_ineq {
            out.extend(core::iter::repeat_n(c.is_concave(), c.len()));
        }
        for c in &self.dyn_ineq {
            out.extend(core::iter::repeat_n(c.use_cuts(), c.len()));
        }
        out
    }

    /// Galerkin forms at `(v̂, ξ̂, τ)`.
    #[allow(clippy::too_many_arguments)]
    pub fn eval_galerkin(
        &self,
        model: &dyn FullOrderModel,
        basis: &ReducedBasis,
        x_ref: &DVector<f64>,
        v_hat: &DVector<f64>,
        xi_hat: &DVector<f64>,
        tau: f64,
        mu: &ParamVector,
        activation_tol: f64,
    ) -> Result<GalerkinConstraintEval> {
        GalerkinFrame::new(self, model, basis, x_ref, xi_hat, tau, mu, activation_tol)?.eval(v_hat)
    }

    /// LSPG forms at step `n`. `history` holds decoded states `x̃ⁿ⁻ʲ` and
    /// their velocities. Kinematic families are evaluated at `(x̃(ξ̂), tⁿ)`,
    /// dynamic ones at `(v̄ⁿ⁻ᑫ(x̃(ξ̂)), x̃ⁿ⁻ᑫ, tⁿ⁻ᑫ)`, where `x̃ⁿ⁻ᑫ` is the trial
    /// state for implicit schemes and the previous state for explicit ones.
    #[allow(clippy::too_many_arguments)]
    pub fn eval_lspg(
        &self,
        model: &dyn FullOrderModel,
        basis: &ReducedBasis,
        x_ref: &DVector<f64>,
        scheme: &LinearMultistepScheme,
        history: &StateHistory,
        xi_hat: &DVector<f64>,
        n: usize,
        mu: &ParamVector,
    ) -> Result<LspgConstraintEval> {
        check_dim("LSPG basis", model.dim(), basis.dim())?;
        let p = basis.p();
        let phi = basis.phi();
        let q = scheme.velocity_offset()?;
        let state = basis.decode(xi_hat, x_ref)?;
        let v = discrete_velocity(scheme, history, &state, n)?;
        let step = scheme.dt() * scheme.beta()[q];
        let dv_dxi = scheme.alpha()[0] / step;
        let kin_at = EvalPoint {
            model,
            state: &state,
            time: scheme.time(n),
            mu,
        };
        let dyn_state = if q == 0 { &state } else { history.state(1) };
        let dyn_at = EvalPoint {
            model,
            state: dyn_state,
            time: scheme.time(n - q),
            mu,
        };

        let kinematic = |list: &[Box<dyn KinematicConstraint>]| {
            let mut out = Block::with_rows(rows_kin(list), p);
            let mut r = 0;
            for c in list {
                out.set(r, &c.value(&kin_at), &(c.state_jacobian(&kin_at) * phi));
                r += c.len();
            }
            out
        };
        let dynamic = |list: &[Box<dyn DynamicConstraint>]| {
            let mut out = Block::with_rows(rows_dyn(list), p);
            let mut r = 0;
            for c in list {
                let mut jac = c.velocity_jacobian(&v, &dyn_at) * dv_dxi;
                if q == 0 {
                    jac += c.state_jacobian(&v, &dyn_at);
                }
                let mut jac = jac * phi;
                let mut val = c.value(&v, &dyn_at);
                if c.lspg_scaled_by_step() {
                    val *= step;
                    jac *= step;
                }
                out.set(r, &val, &jac);
                r += c.len();
            }
            out
        };
        Ok(LspgConstraintEval {
            kin_eq: kinematic(&self.kin_eq),
            dyn_eq: dynamic(&self.dyn_eq),
            kin_ineq: kinematic(&self.kin_ineq),
            dyn_ineq: dynamic(&self.dyn_ineq),
        })
    }
}
