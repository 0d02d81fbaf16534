use alloc::vec::Vec;

use nalgebra::DVector;

use crate::fom::{FullOrderModel, ParamVector};
use crate::linalg::SparseMatrix;

/// How a point source of strength `μ` is turned into a nodal source term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceDeposition {
    /// `μ` is added to the nearest node's balance as is.
    #[default]
    Nodal,
    /// `μ / (Δy Δz)`, the delta function regularized over one cell.
    PerCellArea,
}

/// Nonlinear heat equation `ρc θ_t − ∇·(λ(θ) ∇θ) = s` on the unit square with
/// adiabatic walls, `λ(θ) = θ − 250`, and two point sources moving in `y`:
/// strength `μ₁` at `(0.5 + μ₄ sin(2π μ₃ t), 0.2)` and `μ₂` at
/// `(0.5 − μ₄ sin(2π μ₃ t), 0.5)`.
///
/// Unknowns sit at cell centres of an `n × n` grid with spacing `h = 1/n`,
/// ordered `k = iy + n·iz`. Zero-flux walls drop the boundary faces, so every
/// interior face flux enters two nodes with opposite signs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionModel {
    n: usize,
    deposition: SourceDeposition,
    final_time: f64,
}

impl DiffusionModel {
    pub const RHO: f64 = 8000.0;
    pub const HEAT_CAPACITY: f64 = 500.0;
    pub const INITIAL_TEMPERATURE: f64 = 300.0;
    pub const FINAL_TIME: f64 = 10_000.0;
    pub const N_STEPS: usize = 100;
    pub const SOURCE_Z: [f64; 2] = [0.2, 0.5];

    /// 33 × 33 grid (`N = 1089`).
    pub fn standard() -> Self {
        Self::new(33)
    }

    pub fn new(n: usize) -> Self {
        assert!(n > 0);
        Self {
            n,
            deposition: SourceDeposition::default(),
            final_time: Self::FINAL_TIME,
        }
    }

    pub fn with_deposition(mut self, deposition: SourceDeposition) -> Self {
        self.deposition = deposition;
        self
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn rho_c() -> f64 {
        Self::RHO * Self::HEAT_CAPACITY
    }

    pub fn conductivity(theta: f64) -> f64 {
        (theta - 300.0) + 50.0
    }

    fn deposition_weight(&self) -> f64 {
        match self.deposition {
            SourceDeposition::Nodal => 1.0,
            SourceDeposition::PerCellArea => 1.0 / (self.h() * self.h()),
        }
    }

    fn nearest_index(&self, coord: f64) -> usize {
        let mut c = coord;
        if !(0.0..=1.0).contains(&c) {
            log::warn!("source coordinate {c} outside the unit square, clamped");
            c = c.clamp(0.0, 1.0);
        }
        let j = libm::floor(c * self.n as f64) as usize;
        j.min(self.n - 1)
    }

    /// Node indices and nodal strengths of the two sources at time `t`.
    pub fn sources(&self, t: f64, mu: &ParamVector) -> [(usize, f64); 2] {
        let offset = mu[3] * libm::sin(2.0 * core::f64::consts::PI * mu[2] * t);
        let w = self.deposition_weight();
        let ys = [0.5 + offset, 0.5 - offset];
        let mut out = [(0, 0.0); 2];
        for s in 0..2 {
            let iy = self.nearest_index(ys[s]);
            let iz = self.nearest_index(Self::SOURCE_Z[s]);
            out[s] = (iy + self.n * iz, w * mu[s]);
        }
        out
    }

    /// Energy `(ρc/N) 1ᵀx`, i.e. `ρc` times the mean temperature.
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        Self::rho_c() * x.sum() / x.len() as f64
    }

    /// Net energy intake rate `dE/dt` implied by the sources alone.
    pub fn energy_source(&self, _t: f64, mu: &ParamVector) -> f64 {
        self.deposition_weight() * (mu[0] + mu[1]) / (self.n * self.n) as f64
    }

    /// `(μ₁, μ₂) ∈ {(−1.1e6, 0.9e6), (−1e6, 1e6)} × μ₃ ∈ {5e−5, 1.5e−4} ×
    /// μ₄ ∈ {0.1, 0.3}`.
    pub fn training_set() -> Vec<ParamVector> {
        let mut out = Vec::new();
        for &(m1, m2) in &[(-1.1e6, 0.9e6), (-1.0e6, 1.0e6)] {
            for &m3 in &[5e-5, 1.5e-4] {
                for &m4 in &[0.1, 0.3] {
                    out.push(ParamVector::from(&[m1, m2, m3, m4][..]));
                }
            }
        }
        out
    }

    /// Visits each interior face once as `(a, b)` with `b` the right or upper
    /// neighbour of `a`.
    fn for_each_face(&self, mut f: impl FnMut(usize, usize)) {
        let n = self.n;
        for iz in 0..n {
            for iy in 0..n {
                let a = iy + n * iz;
                if iy + 1 < n {
                    f(a, a + 1);
                }
                if iz + 1 < n {
                    f(a, a + n);
                }
            }
        }
    }
}

impl FullOrderModel for DiffusionModel {
    fn dim(&self) -> usize {
        self.n * self.n
    }

    fn n_params(&self) -> usize {
        4
    }

    fn final_time(&self) -> f64 {
        self.final_time
    }

    fn velocity(&self, x: &DVector<f64>, t: f64, mu: &ParamVector) -> DVector<f64> {
        let inv_h2 = 1.0 / (self.h() * self.h());
        let mut out = DVector::zeros(self.dim());
        self.for_each_face(|a, b| {
            let lam = 0.5 * (Self::conductivity(x[a]) + Self::conductivity(x[b]));
            let flux = lam * (x[b] - x[a]) * inv_h2;
            out[a] += flux;
            out[b] -= flux;
        });
        for (k, s) in self.sources(t, mu) {
            out[k] += s;
        }
        out / Self::rho_c()
    }

    fn velocity_jacobian(&self, x: &DVector<f64>, _t: f64, _mu: &ParamVector) -> SparseMatrix {
        let inv_h2 = 1.0 / (self.h() * self.h());
        let scale = 1.0 / Self::rho_c();
        let mut trip = Vec::with_capacity(5 * self.dim());
        self.for_each_face(|a, b| {
            let lam = 0.5 * (Self::conductivity(x[a]) + Self::conductivity(x[b]));
            let diff = 0.5 * (x[b] - x[a]);
            let d_da = (diff - lam) * inv_h2 * scale;
            let d_db = (diff + lam) * inv_h2 * scale;
            trip.push((a, a, d_da));
            trip.push((a, b, d_db));
            trip.push((b, a, -d_da));
            trip.push((b, b, -d_db));
        });
        SparseMatrix::from_triplets(self.dim(), self.dim(), &trip)
    }

    fn initial_state(&self, _mu: &ParamVector) -> DVector<f64> {
        DVector::from_element(self.dim(), Self::INITIAL_TEMPERATURE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mu(m1: f64, m2: f64) -> ParamVector {
        ParamVector::from(&[m1, m2, 1e-4, 0.2][..])
    }

    #[test]
    fn uniform_temperature_without_sources_is_steady() {
        let m = DiffusionModel::standard();
        let x = m.initial_state(&mu(0.0, 0.0));
        assert!(m.velocity(&x, 123.0, &mu(0.0, 0.0)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn source_and_sink_cancel() {
        let m = DiffusionModel::standard();
        let x = m.initial_state(&mu(-1e6, 1e6));
        let v = m.velocity(&x, 2500.0, &mu(-1e6, 1e6));
        assert_eq!(v.sum(), 0.0);
        assert_eq!(m.energy_source(0.0, &mu(-1e6, 1e6)), 0.0);
    }

    #[test]
    fn three_by_three_hot_centre() {
        // Centre node 4 at 310 K, neighbours at 300 K; λ_face = (60 + 50)/2 = 55.
        let m = DiffusionModel::new(3);
        let mut x = DVector::from_element(9, 300.0);
        x[4] = 310.0;
        let v = m.velocity(&x, 0.0, &mu(0.0, 0.0));
        let h2 = 1.0 / 9.0;
        let rc = DiffusionModel::rho_c();
        let face = 55.0 * 10.0 / h2 / rc;
        assert!((v[4] + 4.0 * face).abs() < 1e-15);
        for k in [1, 3, 5, 7] {
            assert!((v[k] - face).abs() < 1e-15);
        }
        for k in [0, 2, 6, 8] {
            assert_eq!(v[k], 0.0);
        }
    }

    #[test]
    fn jacobian_at_uniform_state_is_scaled_laplacian() {
        let m = DiffusionModel::new(4);
        let x = DVector::from_element(16, 300.0);
        let j = m.velocity_jacobian(&x, 0.0, &mu(0.0, 0.0)).to_dense();
        let c = 50.0 * 16.0 / DiffusionModel::rho_c();
        // Corner node 0 has two neighbours, interior node 5 has four.
        assert!((j[(0, 0)] + 2.0 * c).abs() < 1e-18);
        assert!((j[(0, 1)] - c).abs() < 1e-18 && (j[(0, 4)] - c).abs() < 1e-18);
        assert!((j[(5, 5)] + 4.0 * c).abs() < 1e-18);
        for col in 0..16 {
            assert!(j.column(col).sum().abs() < 1e-18);
        }
    }

    #[test]
    fn sources_land_on_nearest_nodes() {
        let m = DiffusionModel::standard();
        let s = m.sources(0.0, &mu(-1e6, 1e6));
        // y = 0.5 → iy = 16; z = 0.2 → iz = 6; z = 0.5 → iz = 16.
        assert_eq!(s[0], (16 + 33 * 6, -1e6));
        assert_eq!(s[1], (16 + 33 * 16, 1e6));
        let dense = DiffusionModel::standard().with_deposition(SourceDeposition::PerCellArea);
        assert!((dense.sources(0.0, &mu(-1e6, 1e6))[1].1 - 1e6 * 1089.0).abs() < 1e-3);
    }
}
