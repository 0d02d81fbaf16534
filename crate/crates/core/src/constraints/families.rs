//! rsum, tvd, tvb and ec constraints.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::tv::{sgn, total_variation, tv_subgradient};
use super::{DynamicConstraint, EvalPoint, KinematicConstraint};
use crate::error::{Error, Result};
use crate::fom::ParamVector;
use crate::layout::FieldLayout;
use crate::linalg::SparseMatrix;
use crate::models::DiffusionModel;

/// `C r(v, ξ, τ) = C (v − f(ξ, τ))`: selected sums of residual entries vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct Rsum {
    c: SparseMatrix,
}

impl Rsum {
    pub fn new(c: SparseMatrix) -> Self {
        Self { c }
    }

    /// One row summing every entry.
    pub fn all_ones(dim: usize) -> Self {
        Self::index_blocks(dim, &[0..dim]).expect("full range is valid")
    }

    /// One 0/1 row per index range.
    pub fn index_blocks(dim: usize, ranges: &[Range<usize>]) -> Result<Self> {
        let mut trip = Vec::new();
        for (row, r) in ranges.iter().enumerate() {
            if r.end > dim || r.start >= r.end {
                return Err(Error::InvalidArgument(alloc::format!(
                    "rsum range {r:?} invalid for dimension {dim}"
                )));
            }
            trip.extend(r.clone().map(|j| (row, j, 1.0)));
        }
        Ok(Self::new(SparseMatrix::from_triplets(ranges.len(), dim, &trip)))
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.c
    }
}

impl DynamicConstraint for Rsum {
    fn len(&self) -> usize {
        self.c.nrows()
    }

    fn value(&self, v: &DVector<f64>, at: &EvalPoint) -> DVector<f64> {
        let f = at.model.velocity(at.state, at.time, at.mu);
        self.c.mul_vec(&(v - f))
    }

    fn velocity_jacobian(&self, _v: &DVector<f64>, _at: &EvalPoint) -> DMatrix<f64> {
        self.c.to_dense()
    }

    fn state_jacobian(&self, _v: &DVector<f64>, at: &EvalPoint) -> DMatrix<f64> {
        let jf = at.model.velocity_jacobian(at.state, at.time, at.mu);
        let mut out = DMatrix::zeros(self.c.nrows(), self.c.ncols());
        for i in 0..self.c.nrows() {
            let mut ci = DVector::zeros(self.c.ncols());
            for (j, v) in self.c.row(i) {
                ci[j] = v;
            }
            out.set_row(i, &(-jf.tr_mul_vec(&ci)).transpose());
        }
        out
    }

    fn lspg_scaled_by_step(&self) -> bool {
        true
    }
}

fn field_rows(
    layout: &FieldLayout,
    dim: usize,
    mut row: impl FnMut(&[f64]) -> Vec<f64>,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(layout.len(), dim);
    for (f, (_, range)) in layout.iter().enumerate() {
        let g = row(&x.as_slice()[range.clone()]);
        for (k, j) in range.enumerate() {
            out[(f, j)] = g[k];
        }
    }
    out
}

/// `−Σ sgn(Δx) Δv ≥ 0` per field: total variation does not increase along `v`.
/// The sign pattern is taken at the evaluation state and treated as constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Tvd {
    layout: FieldLayout,
}

impl Tvd {
    pub fn new(layout: FieldLayout) -> Self {
        Self { layout }
    }
}

impl DynamicConstraint for Tvd {
    fn len(&self) -> usize {
        self.layout.len()
    }

    fn value(&self, v: &DVector<f64>, at: &EvalPoint) -> DVector<f64> {
        DVector::from_iterator(
            self.layout.len(),
            self.layout.iter().map(|(_, r)| {
                let x = &at.state.as_slice()[r.clone()];
                let v = &v.as_slice()[r];
                -x.windows(2)
                    .zip(v.windows(2))
                    .map(|(a, b)| sgn(a[1] - a[0]) * (b[1] - b[0]))
                    .sum::<f64>()
            }),
        )
    }

    fn velocity_jacobian(&self, _v: &DVector<f64>, at: &EvalPoint) -> DMatrix<f64> {
        let dim = at.state.len();
        field_rows(
            &self.layout,
            dim,
            |x| tv_subgradient(x).into_iter().map(|g| -g).collect(),
            at.state,
        )
    }

    fn state_jacobian(&self, _v: &DVector<f64>, at: &EvalPoint) -> DMatrix<f64> {
        DMatrix::zeros(self.layout.len(), at.state.len())
    }

    /// For implicit steps the sign pattern moves with `ξ`, so the row jumps
    /// between patterns. Each cut `sgnₖᵀD(xⁿ⁻¹ − x̃(ξ)) ≥ 0` is exact on its
    /// own pattern and holds at `ξ = x̂ⁿ⁻¹`.
    fn use_cuts(&self) -> bool {
        true
    }
}

/// `b_f − TV(x_f) ≥ 0` per field.
#[derive(Debug, Clone, PartialEq)]
pub struct Tvb {
    layout: FieldLayout,
    bounds: Vec<f64>,
}

impl Tvb {
    pub fn new(layout: FieldLayout, bounds: Vec<f64>) -> Result<Self> {
        if bounds.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                context: "tvb bounds",
                expected: layout.len(),
                found: bounds.len(),
            });
        }
        if bounds.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::InvalidArgument("tvb bounds must be positive".into()));
        }
        Ok(Self { layout, bounds })
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.layout
    }
}

impl KinematicConstraint for Tvb {
    fn len(&self) -> usize {
        self.layout.len()
    }

    fn value(&self, at: &EvalPoint) -> DVector<f64> {
        DVector::from_iterator(
            self.layout.len(),
            self.layout.iter().zip(&self.bounds).map(|((_, r), b)| {
                b - total_variation(&at.state.as_slice()[r]).unwrap_or(0.0)
            }),
        )
    }

    fn state_jacobian(&self, at: &EvalPoint) -> DMatrix<f64> {
        field_rows(
            &self.layout,
            at.state.len(),
            |x| tv_subgradient(x).into_iter().map(|g| -g).collect(),
            at.state,
        )
    }

    fn is_concave(&self) -> bool {
        true
    }
}

type SourceFn = dyn Fn(f64, &ParamVector) -> f64 + Send + Sync;

/// `∇Eᵀ v − S(τ; ν) = 0` for a linear energy `E(x) = ∇Eᵀ x`.
pub struct EnergyConservation {
    gradient: DVector<f64>,
    source: Box<SourceFn>,
}

impl core::fmt::Debug for EnergyConservation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("EnergyConservation")
            .field("gradient", &self.gradient.len())
            .finish_non_exhaustive()
    }
}

impl EnergyConservation {
    pub fn new(
        gradient: DVector<f64>,
        source: impl Fn(f64, &ParamVector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            gradient,
            source: Box::new(source),
        }
    }

    /// The diffusion energy divided by `ρc/N`: `1ᵀv = N S / ρc`.
    pub fn diffusion(model: &DiffusionModel) -> Self {
        use crate::fom::FullOrderModel;
        let n = model.dim();
        let m = model.clone();
        let scale = n as f64 / DiffusionModel::rho_c();
        Self::new(DVector::from_element(n, 1.0), move |t, mu| {
            scale * m.energy_source(t, mu)
        })
    }
}

impl DynamicConstraint for EnergyConservation {
    fn len(&self) -> usize {
        1
    }

    fn value(&self, v: &DVector<f64>, at: &EvalPoint) -> DVector<f64> {
        DVector::from_element(1, self.gradient.dot(v) - (self.source)(at.time, at.mu))
    }

    fn velocity_jacobian(&self, _v: &DVector<f64>, _at: &EvalPoint) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, self.gradient.len(), self.gradient.as_slice())
    }

    fn state_jacobian(&self, _v: &DVector<f64>, at: &EvalPoint) -> DMatrix<f64> {
        DMatrix::zeros(1, at.state.len())
    }
}
