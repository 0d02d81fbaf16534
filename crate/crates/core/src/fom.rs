//! Parameterized full-order ODE systems and their linear multistep time
//! discretization.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;
use core::ops::Index;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::linalg::SparseMatrix;
use crate::solvers::newton::{newton_solve, NewtonOptions};

/// Parameter instance `μ` of a parameterized model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite parameter entry in {values:?}"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<&[f64]> for ParamVector {
    fn from(values: &[f64]) -> Self {
        Self::new(values.to_vec()).expect("finite parameter values")
    }
}

/// Parameterized ODE `ẋ = f(x, t; μ)`, `x(0) = x⁰(μ)`.
pub trait FullOrderModel: Send + Sync {
    /// State dimension `N`.
    fn dim(&self) -> usize;

    /// Number of parameters `n_μ`.
    fn n_params(&self) -> usize;

    /// Final time `T`.
    fn final_time(&self) -> f64;

    fn velocity(&self, state: &DVector<f64>, t: f64, mu: &ParamVector) -> DVector<f64>;

    /// Exact derivative of [`FullOrderModel::velocity`] with respect to the state.
    fn velocity_jacobian(&self, state: &DVector<f64>, t: f64, mu: &ParamVector) -> SparseMatrix;

    fn initial_state(&self, mu: &ParamVector) -> DVector<f64>;

    fn check_params(&self, mu: &ParamVector) -> Result<()> {
        check_dim("parameter vector", self.n_params(), mu.len())
    }
}

/// Time-continuous residual `r(v, ξ, τ; ν) = v − f(ξ, τ; ν)`.
pub fn continuous_residual(
    model: &dyn FullOrderModel,
    velocity: &DVector<f64>,
    state: &DVector<f64>,
    t: f64,
    mu: &ParamVector,
) -> Result<DVector<f64>> {
    check_dim("residual velocity", model.dim(), velocity.len())?;
    check_dim("residual state", model.dim(), state.len())?;
    Ok(velocity - model.velocity(state, t, mu))
}

/// Linear multistep scheme `Σ αⱼ xⁿ⁻ʲ − Δt Σ βⱼ f(xⁿ⁻ʲ) = 0` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMultistepScheme {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    dt: f64,
    n_steps: usize,
}

impl LinearMultistepScheme {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, final_time: f64, n_steps: usize) -> Result<Self> {
        if alpha.len() < 2 || alpha.len() != beta.len() {
            return Err(Error::InvalidScheme(
                "alpha and beta need equal length k + 1 with k >= 1",
            ));
        }
        if alpha[0] == 0.0 {
            return Err(Error::InvalidScheme("alpha_0 must be nonzero"));
        }
        let scale = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if alpha.iter().sum::<f64>().abs() > 1e-12 * scale {
            return Err(Error::InvalidScheme("alpha coefficients must sum to zero"));
        }
        if alpha.iter().chain(beta.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidScheme("non-finite coefficient"));
        }
        if n_steps == 0 || !(final_time > 0.0) || !final_time.is_finite() {
            return Err(Error::InvalidScheme(
                "final time and step count must be positive",
            ));
        }
        Ok(Self {
            alpha,
            beta,
            dt: final_time / n_steps as f64,
            n_steps,
        })
    }

    pub fn backward_euler(final_time: f64, n_steps: usize) -> Result<Self> {
        Self::new(
            alloc::vec![1.0, -1.0],
            alloc::vec![1.0, 0.0],
            final_time,
            n_steps,
        )
    }

    pub fn explicit_euler(final_time: f64, n_steps: usize) -> Result<Self> {
        Self::new(
            alloc::vec![1.0, -1.0],
            alloc::vec![0.0, 1.0],
            final_time,
            n_steps,
        )
    }

    /// Number of previous steps `k`.
    pub fn k(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn is_explicit(&self) -> bool {
        self.beta[0] == 0.0
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Offset `q` of the velocity consumed by the discrete velocity map:
    /// 0 for implicit schemes, 1 for explicit ones.
    pub fn velocity_offset(&self) -> Result<usize> {
        let q = usize::from(self.is_explicit());
        if self.beta[q] == 0.0 {
            return Err(Error::InvalidScheme(
                "beta_q vanishes; the scheme has no state-to-velocity map",
            ));
        }
        Ok(q)
    }

    fn check_step(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.n_steps {
            return Err(Error::StepOutOfRange {
                step: n,
                n_steps: self.n_steps,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct HistoryEntry {
    state: DVector<f64>,
    velocity: DVector<f64>,
    time: f64,
}

/// The last `k` accepted states with their cached velocities, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHistory {
    capacity: usize,
    entries: VecDeque<HistoryEntry>,
}

impl StateHistory {
    pub fn new(k: usize) -> Self {
        Self {
            capacity: k,
            entries: VecDeque::with_capacity(k + 1),
        }
    }

    /// Records an accepted state, evaluating and caching its velocity.
    pub fn push(
        &mut self,
        model: &dyn FullOrderModel,
        state: DVector<f64>,
        t: f64,
        mu: &ParamVector,
    ) {
        let velocity = model.velocity(&state, t, mu);
        self.push_with_velocity(state, velocity, t);
    }

    pub fn push_with_velocity(&mut self, state: DVector<f64>, velocity: DVector<f64>, t: f64) {
        self.entries.push_front(HistoryEntry {
            state,
            velocity,
            time: t,
        });
        self.entries.truncate(self.capacity);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `xⁿ⁻ʲ` for `j ≥ 1`.
    pub fn state(&self, j: usize) -> &DVector<f64> {
        &self.entries[j - 1].state
    }

    /// Cached `f(xⁿ⁻ʲ, tⁿ⁻ʲ; μ)` for `j ≥ 1`.
    pub fn velocity(&self, j: usize) -> &DVector<f64> {
        &self.entries[j - 1].velocity
    }

    pub fn time(&self, j: usize) -> f64 {
        self.entries[j - 1].time
    }

    fn require(&self, k: usize) -> Result<()> {
        if self.entries.len() < k {
            return Err(Error::InsufficientHistory {
                needed: k,
                have: self.entries.len(),
            });
        }
        Ok(())
    }
}

/// `Σ_{j≥1} αⱼ xⁿ⁻ʲ − Δt Σ_{j≥first} βⱼ f(xⁿ⁻ʲ)`, the history part of the
/// discrete residual. Also used with reduced coordinates and velocities.
pub fn history_sum(
    scheme: &LinearMultistepScheme,
    history: &StateHistory,
    first_beta: usize,
) -> Result<DVector<f64>> {
    let k = scheme.k();
    history.require(k)?;
    let mut acc = DVector::zeros(history.state(1).len());
    for j in 1..=k {
        acc.axpy(scheme.alpha[j], history.state(j), 1.0);
        if j >= first_beta && scheme.beta[j] != 0.0 {
            acc.axpy(-scheme.dt * scheme.beta[j], history.velocity(j), 1.0);
        }
    }
    Ok(acc)
}

/// Time-discrete residual `rⁿ(ξ; ν)`.
pub fn discrete_residual(
    model: &dyn FullOrderModel,
    scheme: &LinearMultistepScheme,
    history: &StateHistory,
    state: &DVector<f64>,
    n: usize,
    mu: &ParamVector,
) -> Result<DVector<f64>> {
    scheme.check_step(n)?;
    check_dim("discrete residual state", model.dim(), state.len())?;
    history.require(scheme.k())?;
    // State terms first, so `ξ = xⁿ⁻¹` cancels exactly for explicit schemes.
    let mut r = state * scheme.alpha[0];
    for j in 1..=scheme.k() {
        r.axpy(scheme.alpha[j], history.state(j), 1.0);
    }
    if scheme.beta[0] != 0.0 {
        let f = model.velocity(state, scheme.time(n), mu);
        r.axpy(-scheme.dt * scheme.beta[0], &f, 1.0);
    }
    for j in 1..=scheme.k() {
        if scheme.beta[j] != 0.0 {
            r.axpy(-scheme.dt * scheme.beta[j], history.velocity(j), 1.0);
        }
    }
    Ok(r)
}

/// `∂rⁿ/∂ξ = α₀ I − Δt β₀ ∂f/∂ξ`.
pub fn discrete_residual_jacobian(
    model: &dyn FullOrderModel,
    scheme: &LinearMultistepScheme,
    state: &DVector<f64>,
    n: usize,
    mu: &ParamVector,
) -> SparseMatrix {
    if scheme.beta[0] == 0.0 {
        let mut id = SparseMatrix::identity(model.dim());
        if scheme.alpha[0] != 1.0 {
            id = id.scaled_plus_identity(0.0, scheme.alpha[0]);
        }
        return id;
    }
    model
        .velocity_jacobian(state, scheme.time(n), mu)
        .scaled_plus_identity(scheme.alpha[0], -scheme.dt * scheme.beta[0])
}

/// Scheme-induced velocity `v̄ⁿ⁻ᑫ(ξ)`: the velocity at `tⁿ⁻ᑫ` implied by
/// accepting `ξ` as the new state.
pub fn discrete_velocity(
    scheme: &LinearMultistepScheme,
    history: &StateHistory,
    state: &DVector<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    scheme.check_step(n)?;
    let q = scheme.velocity_offset()?;
    let mut v = history_sum(scheme, history, 1 + q)?;
    check_dim("discrete velocity state", v.len(), state.len())?;
    v.axpy(scheme.alpha[0], state, 1.0);
    v /= scheme.dt * scheme.beta[q];
    Ok(v)
}

/// Per-step diagnostics of a full-order solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub iterations: usize,
    pub residual_norm: f64,
}

/// States `x⁰ … x^{N_T}` on the uniform grid `tⁿ = n Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySolution {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Diagnostics for steps `1..=N_T`.
    pub diagnostics: Vec<StepDiagnostics>,
}

impl TrajectorySolution {
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Solves the full-order OΔE from `x⁰(μ)`. Only self-starting (`k = 1`)
/// schemes are accepted; use [`solve_fom_from_history`] otherwise.
pub fn solve_fom(
    model: &dyn FullOrderModel,
    scheme: &LinearMultistepScheme,
    mu: &ParamVector,
) -> Result<TrajectorySolution> {
    if scheme.k() != 1 {
        return Err(Error::InsufficientHistory {
            needed: scheme.k(),
            have: 1,
        });
    }
    model.check_params(mu)?;
    solve_fom_from_history(model, scheme, mu, &[model.initial_state(mu)])
}

/// Solves the full-order OΔE given user-provided start states `x⁰ … x^{k−1}`.
pub fn solve_fom_from_history(
    model: &dyn FullOrderModel,
    scheme: &LinearMultistepScheme,
    mu: &ParamVector,
    start: &[DVector<f64>],
) -> Result<TrajectorySolution> {
    let k = scheme.k();
    if start.len() < k {
        return Err(Error::InsufficientHistory {
            needed: k,
            have: start.len(),
        });
    }
    for s in start {
        check_dim("start state", model.dim(), s.len())?;
    }
    let options = NewtonOptions::default();
    let mut history = StateHistory::new(k);
    let mut times = Vec::with_capacity(scheme.n_steps() + 1);
    let mut states = Vec::with_capacity(scheme.n_steps() + 1);
    let mut diagnostics = Vec::with_capacity(scheme.n_steps());
    for (n, s) in start.iter().enumerate() {
        history.push(model, s.clone(), scheme.time(n), mu);
        times.push(scheme.time(n));
        states.push(s.clone());
        if n > 0 {
            diagnostics.push(StepDiagnostics {
                iterations: 0,
                residual_norm: 0.0,
            });
        }
    }

    for n in start.len()..=scheme.n_steps() {
        let t = scheme.time(n);
        let (next, diag) = if scheme.is_explicit() {
            // rⁿ is affine in ξ with matrix α₀ I.
            let mut x = history_sum(scheme, &history, 1)?;
            x /= -scheme.alpha[0];
            (x, StepDiagnostics {
                iterations: 0,
                residual_norm: 0.0,
            })
        } else {
            let outcome = newton_solve(
                |x: &DVector<f64>| discrete_residual(model, scheme, &history, x, n, mu),
                |x: &DVector<f64>| Ok(discrete_residual_jacobian(model, scheme, x, n, mu)),
                history.state(1).clone(),
                &options,
            )
            .map_err(|e| Error::StepFailure {
                step: n,
                reason: format!("{e}"),
            })?;
            if !outcome.converged {
                return Err(Error::StepFailure {
                    step: n,
                    reason: format!(
                        "Newton did not converge in {} iterations (|r| = {:e})",
                        outcome.iterations, outcome.residual_norm
                    ),
                });
            }
            (outcome.x, StepDiagnostics {
                iterations: outcome.iterations,
                residual_norm: outcome.residual_norm,
            })
        };
        history.push(model, next.clone(), t, mu);
        times.push(t);
        states.push(next);
        diagnostics.push(diag);
    }
    Ok(TrajectorySolution {
        times,
        states,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// `ẋ = −x` in any dimension, one parameter (unused).
    struct Decay(usize);

    impl FullOrderModel for Decay {
        fn dim(&self) -> usize {
            self.0
        }
        fn n_params(&self) -> usize {
            1
        }
        fn final_time(&self) -> f64 {
            1.0
        }
        fn velocity(&self, x: &DVector<f64>, _t: f64, _mu: &ParamVector) -> DVector<f64> {
            -x
        }
        fn velocity_jacobian(&self, _x: &DVector<f64>, _t: f64, _mu: &ParamVector) -> SparseMatrix {
            SparseMatrix::identity(self.0).scaled_plus_identity(0.0, -1.0)
        }
        fn initial_state(&self, _mu: &ParamVector) -> DVector<f64> {
            DVector::from_element(self.0, 1.0)
        }
    }

    fn mu() -> ParamVector {
        ParamVector::new(vec![0.0]).unwrap()
    }

    #[test]
    fn scheme_validation() {
        assert!(LinearMultistepScheme::new(vec![1.0, -0.9], vec![1.0, 0.0], 1.0, 10).is_err());
        assert!(LinearMultistepScheme::new(vec![0.0, 0.0], vec![1.0, 0.0], 1.0, 10).is_err());
        assert!(LinearMultistepScheme::new(vec![1.0, -1.0], vec![1.0, 0.0], 1.0, 0).is_err());
        let bdf2 = LinearMultistepScheme::new(
            vec![1.0, -4.0 / 3.0, 1.0 / 3.0],
            vec![2.0 / 3.0, 0.0, 0.0],
            1.0,
            4,
        )
        .unwrap();
        assert_eq!(bdf2.k(), 2);
        assert!(!bdf2.is_explicit());
        assert_eq!(bdf2.dt(), 0.25);
        let all_zero = LinearMultistepScheme::new(vec![1.0, -1.0], vec![0.0, 0.0], 1.0, 4).unwrap();
        assert!(matches!(all_zero.velocity_offset(), Err(Error::InvalidScheme(_))));
    }

    #[test]
    fn continuous_residual_definition() {
        let m = Decay(3);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let f = m.velocity(&x, 0.0, &mu());
        assert_eq!(continuous_residual(&m, &f, &x, 0.0, &mu()).unwrap(), DVector::zeros(3));
        let zero = DVector::zeros(3);
        assert_eq!(continuous_residual(&m, &zero, &x, 0.0, &mu()).unwrap(), -f);
        assert!(matches!(
            continuous_residual(&m, &DVector::zeros(2), &x, 0.0, &mu()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn backward_euler_scalar_fixed_point() {
        let m = Decay(1);
        let scheme = LinearMultistepScheme::backward_euler(1.0, 2).unwrap();
        let mut h = StateHistory::new(1);
        h.push(&m, DVector::from_element(1, 1.0), 0.0, &mu());
        let xi = DVector::from_element(1, 1.0 / 1.5);
        let r = discrete_residual(&m, &scheme, &h, &xi, 1, &mu()).unwrap();
        assert!(r[0].abs() < 1e-15);
    }

    #[test]
    fn explicit_euler_update_has_zero_residual() {
        let m = Decay(2);
        let scheme = LinearMultistepScheme::explicit_euler(1.0, 4).unwrap();
        let mut h = StateHistory::new(1);
        let x0 = DVector::from_vec(vec![1.0, 3.0]);
        h.push(&m, x0.clone(), 0.0, &mu());
        let xi = &x0 + m.velocity(&x0, 0.0, &mu()) * scheme.dt();
        let r = discrete_residual(&m, &scheme, &h, &xi, 1, &mu()).unwrap();
        assert!(r.amax() < 1e-15);
        // v̄ⁿ⁻¹ is the forward difference quotient.
        let v = discrete_velocity(&scheme, &h, &xi, 1).unwrap();
        assert!((v - (&xi - &x0) / scheme.dt()).amax() < 1e-14);
    }

    #[test]
    fn discrete_velocity_of_unchanged_state_is_zero() {
        let m = Decay(2);
        let scheme = LinearMultistepScheme::backward_euler(1.0, 4).unwrap();
        let mut h = StateHistory::new(1);
        let x0 = DVector::from_vec(vec![0.3, -0.7]);
        h.push(&m, x0.clone(), 0.0, &mu());
        assert_eq!(discrete_velocity(&scheme, &h, &x0, 1).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn missing_history_is_an_error() {
        let m = Decay(1);
        let scheme = LinearMultistepScheme::backward_euler(1.0, 2).unwrap();
        let h = StateHistory::new(1);
        let xi = DVector::from_element(1, 0.5);
        assert!(matches!(
            discrete_residual(&m, &scheme, &h, &xi, 1, &mu()),
            Err(Error::InsufficientHistory { needed: 1, have: 0 })
        ));
        let bdf2 = LinearMultistepScheme::new(
            vec![1.0, -4.0 / 3.0, 1.0 / 3.0],
            vec![2.0 / 3.0, 0.0, 0.0],
            1.0,
            4,
        )
        .unwrap();
        assert!(matches!(
            solve_fom(&m, &bdf2, &mu()),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn scalar_decay_backward_euler_geometric() {
        let m = Decay(1);
        let scheme = LinearMultistepScheme::backward_euler(1.0, 2).unwrap();
        let sol = solve_fom(&m, &scheme, &mu()).unwrap();
        assert_eq!(sol.states.len(), 3);
        assert!((sol.states[1][0] - 1.0 / 1.5).abs() < 1e-14);
        assert!((sol.states[2][0] - 1.0 / 2.25).abs() < 1e-14);
        assert_eq!(sol.times, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn explicit_scheme_needs_no_newton() {
        let m = Decay(2);
        let scheme = LinearMultistepScheme::explicit_euler(1.0, 4).unwrap();
        let sol = solve_fom(&m, &scheme, &mu()).unwrap();
        assert!(sol.diagnostics.iter().all(|d| d.iterations == 0));
        assert!((sol.states[4][0] - 0.75f64.powi(4)).abs() < 1e-14);
    }

    #[test]
    fn multistep_with_user_history() {
        let m = Decay(1);
        let bdf2 = LinearMultistepScheme::new(
            vec![1.0, -4.0 / 3.0, 1.0 / 3.0],
            vec![2.0 / 3.0, 0.0, 0.0],
            1.0,
            4,
        )
        .unwrap();
        let dt = bdf2.dt();
        let start = [DVector::from_element(1, 1.0), DVector::from_element(1, (-dt).exp())];
        let sol = solve_fom_from_history(&m, &bdf2, &mu(), &start).unwrap();
        assert_eq!(sol.states.len(), 5);
        assert!((sol.states[4][0] - (-1.0f64).exp()).abs() < 2e-2);
    }
}
