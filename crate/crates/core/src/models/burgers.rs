use alloc::vec::Vec;

use nalgebra::DVector;

use crate::fom::{FullOrderModel, ParamVector};
use crate::linalg::SparseMatrix;

/// Inviscid Burgers' equation `u_t + u u_z = 0` on `[0, L]`, finite volumes
/// with an upwind flux and a Dirichlet inflow equal to the initial value at
/// `z = 0`.
///
/// Parameters: `μ = (frequency, amplitude)` of the initial profile
/// `μ₂ cos(2π μ₁ z / 100) + μ₂ + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersModel {
    n_cells: usize,
    length: f64,
    final_time: f64,
}

impl BurgersModel {
    pub const LENGTH: f64 = 100.0;
    pub const FINAL_TIME: f64 = 30.0;
    pub const N_STEPS: usize = 150;

    /// The reference setup: 200 cells on `[0, 100]`, `T = 30`.
    pub fn standard() -> Self {
        Self::new(200)
    }

    pub fn new(n_cells: usize) -> Self {
        assert!(n_cells > 0);
        Self {
            n_cells,
            length: Self::LENGTH,
            final_time: Self::FINAL_TIME,
        }
    }

    pub fn dz(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    /// Cell centres `(i − ½) Δz`, `i = 1..N`.
    pub fn cell_centers(&self) -> Vec<f64> {
        let dz = self.dz();
        (0..self.n_cells).map(|i| (i as f64 + 0.5) * dz).collect()
    }

    pub fn initial_profile(z: f64, mu: &ParamVector) -> f64 {
        mu[1] * libm::cos(2.0 * core::f64::consts::PI * mu[0] * z / 100.0) + mu[1] + 1.0
    }

    pub fn boundary_value(mu: &ParamVector) -> f64 {
        Self::initial_profile(0.0, mu)
    }

    /// `μ₁ ∈ {0.8, 1.2} × μ₂ ∈ {0.2, 0.6}`.
    pub fn training_set() -> Vec<ParamVector> {
        let mut out = Vec::new();
        for &m1 in &[0.8, 1.2] {
            for &m2 in &[0.2, 0.6] {
                out.push(ParamVector::from(&[m1, m2][..]));
            }
        }
        out
    }
}

impl FullOrderModel for BurgersModel {
    fn dim(&self) -> usize {
        self.n_cells
    }

    fn n_params(&self) -> usize {
        2
    }

    fn final_time(&self) -> f64 {
        self.final_time
    }

    fn velocity(&self, x: &DVector<f64>, _t: f64, mu: &ParamVector) -> DVector<f64> {
        let inv_dz = 1.0 / self.dz();
        let ub = Self::boundary_value(mu);
        let mut flux_left = 0.5 * ub * ub;
        DVector::from_iterator(
            self.n_cells,
            x.iter().map(|&xi| {
                let flux = 0.5 * xi * xi;
                let v = -(flux - flux_left) * inv_dz;
                flux_left = flux;
                v
            }),
        )
    }

    fn velocity_jacobian(&self, x: &DVector<f64>, _t: f64, _mu: &ParamVector) -> SparseMatrix {
        let inv_dz = 1.0 / self.dz();
        let mut trip = Vec::with_capacity(2 * self.n_cells);
        for i in 0..self.n_cells {
            trip.push((i, i, -x[i] * inv_dz));
            if i > 0 {
                trip.push((i, i - 1, x[i - 1] * inv_dz));
            }
        }
        SparseMatrix::from_triplets(self.n_cells, self.n_cells, &trip)
    }

    fn initial_state(&self, mu: &ParamVector) -> DVector<f64> {
        DVector::from_iterator(
            self.n_cells,
            self.cell_centers().into_iter().map(|z| Self::initial_profile(z, mu)),
        )
    }
}
