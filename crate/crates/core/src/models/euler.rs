use alloc::vec::Vec;

use nalgebra::DVector;

use crate::fom::{FullOrderModel, ParamVector};
use crate::layout::FieldLayout;
use crate::linalg::SparseMatrix;

/// Quasi-linear 1-D Euler equations in velocity/pressure/specific-volume
/// form, discretized with first-order backward differences.
///
/// The state is `[u; p; v]` at nodes `z_i = i Δz`, `i = 1..n`; node 0 is the
/// inflow boundary `(u₀, p₀ μ₂, 1/(μ₁ μ₂))`. Parameters: `μ = (ρ₀, ratio)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerModel {
    n_nodes: usize,
    length: f64,
    final_time: f64,
}

impl EulerModel {
    pub const GAMMA: f64 = 1.4;
    pub const U0: f64 = 400.0;
    pub const P0: f64 = 101_000.0;
    pub const LENGTH: f64 = 1.25;
    pub const FINAL_TIME: f64 = 0.001;

    /// 100 nodes per field (`N = 300`).
    pub fn standard() -> Self {
        Self::new(100)
    }

    pub fn new(n_nodes: usize) -> Self {
        assert!(n_nodes > 0);
        Self {
            n_nodes,
            length: Self::LENGTH,
            final_time: Self::FINAL_TIME,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn dz(&self) -> f64 {
        self.length / self.n_nodes as f64
    }

    pub fn field_layout(&self) -> FieldLayout {
        FieldLayout::uniform(&["velocity", "pressure", "specific_volume"], self.n_nodes)
    }

    /// Dirichlet inflow `(u, p, v)`.
    pub fn boundary(mu: &ParamVector) -> (f64, f64, f64) {
        (Self::U0, Self::P0 * mu[1], 1.0 / (mu[0] * mu[1]))
    }

    /// Initial `(u, p, v)`, uniform in space.
    pub fn initial_values(mu: &ParamVector) -> (f64, f64, f64) {
        (Self::U0, Self::P0, 1.0 / mu[0])
    }

    pub fn sound_speed(p: f64, rho: f64) -> f64 {
        libm::sqrt(Self::GAMMA * p / rho)
    }

    /// `μ₁ ∈ {1.1, 1.6} × μ₂ ∈ {1.1, 1.4}`.
    pub fn training_set() -> Vec<ParamVector> {
        let mut out = Vec::new();
        for &m1 in &[1.1, 1.6] {
            for &m2 in &[1.1, 1.4] {
                out.push(ParamVector::from(&[m1, m2][..]));
            }
        }
        out
    }

    fn left(&self, x: &DVector<f64>, field: usize, i: usize, bc: f64) -> f64 {
        if i == 0 {
            bc
        } else {
            x[field * self.n_nodes + i - 1]
        }
    }
}

impl FullOrderModel for EulerModel {
    fn dim(&self) -> usize {
        3 * self.n_nodes
    }

    fn n_params(&self) -> usize {
        2
    }

    fn final_time(&self) -> f64 {
        self.final_time
    }

    fn velocity(&self, x: &DVector<f64>, _t: f64, mu: &ParamVector) -> DVector<f64> {
        let n = self.n_nodes;
        let inv_dz = 1.0 / self.dz();
        let (ub, pb, vb) = Self::boundary(mu);
        let g = Self::GAMMA;
        let mut out = DVector::zeros(3 * n);
        for i in 0..n {
            let (u, p, v) = (x[i], x[n + i], x[2 * n + i]);
            let du = (u - self.left(x, 0, i, ub)) * inv_dz;
            let dp = (p - self.left(x, 1, i, pb)) * inv_dz;
            let dv = (v - self.left(x, 2, i, vb)) * inv_dz;
            out[i] = -u * du - v * dp;
            out[n + i] = -u * dp - g * p * du;
            out[2 * n + i] = -u * dv + v * du;
        }
        out
    }

    fn velocity_jacobian(&self, x: &DVector<f64>, _t: f64, mu: &ParamVector) -> SparseMatrix {
        let n = self.n_nodes;
        let inv_dz = 1.0 / self.dz();
        let (ub, pb, vb) = Self::boundary(mu);
        let g = Self::GAMMA;
        let (iu, ip, iv) = (0, n, 2 * n);
        let mut trip = Vec::with_capacity(16 * n);
        for i in 0..n {
            let (u, p, v) = (x[i], x[n + i], x[2 * n + i]);
            let du = (u - self.left(x, 0, i, ub)) * inv_dz;
            let dp = (p - self.left(x, 1, i, pb)) * inv_dz;
            let dv = (v - self.left(x, 2, i, vb)) * inv_dz;

            // u̇ = −u du − v dp
            trip.push((iu + i, iu + i, -du - u * inv_dz));
            trip.push((iu + i, ip + i, -v * inv_dz));
            trip.push((iu + i, iv + i, -dp));
            // ṗ = −u dp − γ p du
            trip.push((ip + i, iu + i, -dp - g * p * inv_dz));
            trip.push((ip + i, ip + i, -u * inv_dz - g * du));
            // v̇ = −u dv + v du
            trip.push((iv + i, iu + i, -dv + v * inv_dz));
            trip.push((iv + i, iv + i, -u * inv_dz + du));
            if i > 0 {
                trip.push((iu + i, iu + i - 1, u * inv_dz));
                trip.push((iu + i, ip + i - 1, v * inv_dz));
                trip.push((ip + i, ip + i - 1, u * inv_dz));
                trip.push((ip + i, iu + i - 1, g * p * inv_dz));
                trip.push((iv + i, iv + i - 1, u * inv_dz));
                trip.push((iv + i, iu + i - 1, -v * inv_dz));
            }
        }
        SparseMatrix::from_triplets(3 * n, 3 * n, &trip)
    }

    fn initial_state(&self, mu: &ParamVector) -> DVector<f64> {
        let n = self.n_nodes;
        let (u, p, v) = Self::initial_values(mu);
        DVector::from_fn(3 * n, |k, _| match k / n {
            0 => u,
            1 => p,
            _ => v,
        })
    }
}
