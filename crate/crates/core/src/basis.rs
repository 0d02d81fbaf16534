//! Snapshot collection, POD bases and maps between full and generalized
//! coordinates.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::constraints::tv::{total_variation, tv_subgradient};
use crate::error::{check_dim, Error, Result};
use crate::fom::{FullOrderModel, ParamVector};
use crate::layout::FieldLayout;
use crate::solvers::{solve_nlp_outer, NlpDerivatives, NlpProblem, NlpResult, NlpValues, SolverOptions};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_THRESHOLD: f64 = 1e-12;

/// Centered snapshots stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
}

impl SnapshotMatrix {
    pub fn new(dim: usize) -> Self {
        Self {
            data: DMatrix::zeros(dim, 0),
        }
    }

    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite snapshot entry".into()));
        }
        Ok(Self { data })
    }

    /// Appends `xⁿ − x_ref` for `n = 1..` of one run; `states[0]` is the
    /// initial state and is skipped.
    pub fn push_run(&mut self, states: &[DVector<f64>], x_ref: &DVector<f64>) -> Result<()> {
        let dim = self.dim();
        check_dim("snapshot reference", dim, x_ref.len())?;
        let new: Vec<&DVector<f64>> = states.iter().skip(1).collect();
        for s in &new {
            check_dim("snapshot", dim, s.len())?;
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite snapshot entry".into()));
            }
        }
        let old = self.data.ncols();
        let mut data = core::mem::replace(&mut self.data, DMatrix::zeros(0, 0))
            .resize_horizontally(old + new.len(), 0.0);
        for (j, s) in new.into_iter().enumerate() {
            data.set_column(old + j, &(s - x_ref));
        }
        self.data = data;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Orthonormal `N × p` trial basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    phi: DMatrix<f64>,
    singular_values: Vec<f64>,
}

impl ReducedBasis {
    /// Wraps a matrix, checking `ΦᵀΦ = I` to `1e−10`.
    pub fn from_matrix(phi: DMatrix<f64>) -> Result<Self> {
        let p = phi.ncols();
        if p == 0 || p > phi.nrows() {
            return Err(Error::InvalidArgument(alloc::format!(
                "basis must have 1..=N columns, got {p} for N = {}",
                phi.nrows()
            )));
        }
        let dev = (phi.tr_mul(&phi) - DMatrix::<f64>::identity(p, p)).amax();
        if !(dev <= 1e-10) {
            return Err(Error::InvalidArgument(alloc::format!(
                "basis columns are not orthonormal (max |ΦᵀΦ − I| = {dev:e})"
            )));
        }
        Ok(Self {
            phi,
            singular_values: Vec::new(),
        })
    }

    /// The first `p` columns of the identity.
    pub fn identity(dim: usize, p: usize) -> Result<Self> {
        Self::from_matrix(DMatrix::identity(dim, p))
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn p(&self) -> usize {
        self.phi.ncols()
    }

    /// Singular values of the snapshot matrix, if built by [`pod`].
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Keeps the leading `p` columns.
    pub fn truncate(&self, p: usize) -> Result<Self> {
        if p == 0 || p > self.p() {
            return Err(Error::RankDeficient {
                requested: p,
                rank: self.p(),
            });
        }
        Ok(Self {
            phi: self.phi.columns(0, p).into_owned(),
            singular_values: self.singular_values.clone(),
        })
    }

    /// `x̂ = Φᵀ(x − x_ref)`.
    pub fn encode(&self, x: &DVector<f64>, x_ref: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("encode state", self.dim(), x.len())?;
        check_dim("encode reference", self.dim(), x_ref.len())?;
        Ok(self.phi.tr_mul(&(x - x_ref)))
    }

    /// `x_ref + Φ x̂`.
    pub fn decode(&self, x_hat: &DVector<f64>, x_ref: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("decode coordinates", self.p(), x_hat.len())?;
        check_dim("decode reference", self.dim(), x_ref.len())?;
        let mut x = x_ref.clone();
        x.gemv(1.0, &self.phi, x_hat, 1.0);
        Ok(x)
    }
}

/// Reference state `x_ref(μ)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ReferenceState {
    /// `x_ref(μ) = x⁰(μ)`.
    #[default]
    InitialCondition,
    Fixed(DVector<f64>),
}

impl ReferenceState {
    pub fn eval(&self, model: &dyn FullOrderModel, mu: &ParamVector) -> DVector<f64> {
        match self {
            Self::InitialCondition => model.initial_state(mu),
            Self::Fixed(x) => x.clone(),
        }
    }
}

/// Leading `p` left singular vectors of the snapshot matrix, each column
/// signed so its largest-magnitude entry is positive.
pub fn pod(snapshots: &SnapshotMatrix, p: usize) -> Result<ReducedBasis> {
    let a = snapshots.matrix();
    if a.ncols() == 0 || p == 0 {
        return Err(Error::RankDeficient {
            requested: p,
            rank: 0,
        });
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.ok_or(Error::Singular("SVD did not return U"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = sigma[0];
    let rank = sigma.iter().filter(|&&s| s > RANK_THRESHOLD * smax).count();
    if p > rank {
        return Err(Error::RankDeficient { requested: p, rank });
    }
    let mut phi = DMatrix::zeros(a.nrows(), p);
    for (k, &i) in order.iter().take(p).enumerate() {
        let mut col = u.column(i).into_owned();
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        phi.set_column(k, &col);
    }
    Ok(ReducedBasis {
        phi,
        singular_values: sigma,
    })
}

/// `min ½‖Φξ̂ + x_ref − x‖² s.t. TV(field_f(x_ref + Φξ̂)) ≤ b_f` for every field.
///
/// The objective is divided by `max(1, ‖Φᵀ(x − x_ref)‖∞)` so the stationarity
/// tolerance is relative to the size of the coordinates. TV rows are handled
/// by outer approximation.
pub fn project_snapshot_constrained(
    basis: &ReducedBasis,
    x_ref: &DVector<f64>,
    x: &DVector<f64>,
    layout: &FieldLayout,
    bounds: &[f64],
    options: &SolverOptions,
) -> Result<NlpResult> {
    check_dim("snapshot", basis.dim(), x.len())?;
    check_dim("field layout", basis.dim(), layout.dim())?;
    check_dim("tvb bounds", layout.len(), bounds.len())?;
    if bounds.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::InvalidArgument("tvb bounds must be positive".into()));
    }
    let unconstrained = basis.encode(x, x_ref)?;
    let problem = SnapshotProjection {
        basis,
        target: x - x_ref,
        layout,
        bounds,
        weight: 1.0 / unconstrained.amax().max(1.0),
    };
    let opts = match options.warm_start {
        Some(_) => options.clone(),
        None => options.with_warm_start(unconstrained),
    };
    Ok(solve_nlp_outer(&problem, &alloc::vec![true; layout.len()], &opts))
}

struct SnapshotProjection<'a> {
    basis: &'a ReducedBasis,
    target: DVector<f64>,
    layout: &'a FieldLayout,
    bounds: &'a [f64],
    weight: f64,
}

impl SnapshotProjection<'_> {
    fn misfit(&self, xi: &DVector<f64>) -> DVector<f64> {
        self.basis.phi() * xi - &self.target
    }
}

impl NlpProblem for SnapshotProjection<'_> {
    fn dim(&self) -> usize {
        self.basis.p()
    }

    fn values(&self, xi: &DVector<f64>) -> NlpValues {
        let r = self.misfit(xi);
        let decoded = &r + &self.target;
        let ineq = DVector::from_iterator(
            self.layout.len(),
            self.layout.iter().zip(self.bounds).map(|((_, range), b)| {
                // Layout fields are non-empty; a single-entry field has TV 0.
                b - total_variation(&decoded.as_slice()[range]).unwrap_or(0.0)
            }),
        );
        NlpValues {
            objective: 0.5 * self.weight * r.norm_squared(),
            eq: DVector::zeros(0),
            ineq,
        }
    }

    fn derivatives(&self, xi: &DVector<f64>) -> NlpDerivatives {
        let phi = self.basis.phi();
        let r = self.misfit(xi);
        let decoded = &r + &self.target;
        let mut jac = DMatrix::zeros(self.layout.len(), self.basis.p());
        for (f, (_, range)) in self.layout.iter().enumerate() {
            let g = tv_subgradient(&decoded.as_slice()[range.clone()]);
            let rows = phi.rows(range.start, range.len());
            let row = rows.tr_mul(&DVector::from_vec(g));
            jac.set_row(f, &(-row.transpose()));
        }
        NlpDerivatives {
            gradient: phi.tr_mul(&r) * self.weight,
            eq_jacobian: DMatrix::zeros(0, self.basis.p()),
            ineq_jacobian: jac,
            hessian: Some(phi.tr_mul(phi) * self.weight),
        }
    }
}
