use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::*;
use crate::basis::{pod, SnapshotMatrix};
use crate::constraints::{total_variation, Rsum, Tvb, Tvd};
use crate::fom::solve_fom;
use crate::layout::FieldLayout;
use crate::linalg::SparseMatrix;
use crate::models::BurgersModel;

fn mu() -> ParamVector {
    ParamVector::from(&[1.1, 0.4][..])
}

/// `ẋ = A x` with a fixed 4×4 `A`.
struct LinearModel {
    a: DMatrix<f64>,
}

impl LinearModel {
    fn new() -> Self {
        Self {
            a: DMatrix::from_row_slice(
                4,
                4,
                &[
                    -1.0, 0.5, 0.0, 0.0, //
                    0.0, -2.0, 0.3, 0.0, //
                    0.1, 0.0, -0.5, 0.2, //
                    0.0, 0.0, 0.4, -1.5,
                ],
            ),
        }
    }
}

impl FullOrderModel for LinearModel {
    fn dim(&self) -> usize {
        4
    }
    fn n_params(&self) -> usize {
        2
    }
    fn final_time(&self) -> f64 {
        1.0
    }
    fn velocity(&self, x: &DVector<f64>, _t: f64, _mu: &ParamVector) -> DVector<f64> {
        &self.a * x
    }
    fn velocity_jacobian(&self, _x: &DVector<f64>, _t: f64, _mu: &ParamVector) -> SparseMatrix {
        let mut trip = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if self.a[(i, j)] != 0.0 {
                    trip.push((i, j, self.a[(i, j)]));
                }
            }
        }
        SparseMatrix::from_triplets(4, 4, &trip)
    }
    fn initial_state(&self, _mu: &ParamVector) -> DVector<f64> {
        DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0])
    }
}

struct Frozen;

impl FullOrderModel for Frozen {
    fn dim(&self) -> usize {
        3
    }
    fn n_params(&self) -> usize {
        2
    }
    fn final_time(&self) -> f64 {
        1.0
    }
    fn velocity(&self, x: &DVector<f64>, _t: f64, _mu: &ParamVector) -> DVector<f64> {
        DVector::zeros(x.len())
    }
    fn velocity_jacobian(&self, _x: &DVector<f64>, _t: f64, _mu: &ParamVector) -> SparseMatrix {
        SparseMatrix::from_triplets(3, 3, &[])
    }
    fn initial_state(&self, _mu: &ParamVector) -> DVector<f64> {
        DVector::from_vec(vec![3.0, -1.0, 0.5])
    }
}

/// Two orthonormal columns in ℝ⁴.
fn two_mode_basis() -> ReducedBasis {
    let s = 0.5f64.sqrt();
    ReducedBasis::from_matrix(DMatrix::from_column_slice(
        4,
        2,
        &[s, s, 0.0, 0.0, 0.0, 0.0, s, -s],
    ))
    .unwrap()
}

fn burgers_pod(scheme: &LinearMultistepScheme, p: usize) -> (BurgersModel, ReducedBasis, DVector<f64>) {
    let m = BurgersModel::new(30);
    let sol = solve_fom(&m, scheme, &mu()).unwrap();
    let mut s = SnapshotMatrix::new(30);
    s.push_run(&sol.states, &sol.states[0]).unwrap();
    (m, pod(&s, p).unwrap(), sol.states[0].clone())
}

fn max_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

#[test]
fn identity_basis_selects_coordinates() {
    let m = LinearModel::new();
    let basis = ReducedBasis::identity(4, 2).unwrap();
    let x_hat = DVector::from_vec(vec![0.3, -0.7]);
    let zero = DVector::zeros(4);
    let v = galerkin_velocity(&m, &basis, &zero, &x_hat, 0.0, &mu()).unwrap();
    let full = &m.a * DVector::from_vec(vec![0.3, -0.7, 0.0, 0.0]);
    assert!((v - full.rows(0, 2)).amax() < 1e-15);
}

#[test]
fn linear_galerkin_backward_euler_matches_reduced_operator() {
    let m = LinearModel::new();
    let basis = two_mode_basis();
    let scheme = LinearMultistepScheme::backward_euler(1.0, 10).unwrap();
    let cfg = RomConfig::new(basis.clone(), scheme.clone(), ProjectionKind::Galerkin)
        .with_reference(ReferenceState::Fixed(DVector::zeros(4)));
    let traj = simulate_rom(&m, &cfg, &mu()).unwrap();
    assert!(traj.completed(), "{:?}", traj.status);
    let a_hat = basis.phi().tr_mul(&(&m.a * basis.phi()));
    let step = (DMatrix::identity(2, 2) - a_hat * scheme.dt()).try_inverse().unwrap();
    let mut x = basis.phi().tr_mul(&m.initial_state(&mu()));
    for n in 0..=10 {
        assert!((&traj.coords[n] - &x).amax() < 1e-9, "step {n}");
        x = &step * x;
    }
}

#[test]
fn linear_lspg_backward_euler_matches_normal_equations() {
    let m = LinearModel::new();
    let basis = two_mode_basis();
    let scheme = LinearMultistepScheme::backward_euler(1.0, 10).unwrap();
    let cfg = RomConfig::new(basis.clone(), scheme.clone(), ProjectionKind::Lspg)
        .with_reference(ReferenceState::Fixed(DVector::zeros(4)));
    let traj = simulate_rom(&m, &cfg, &mu()).unwrap();
    assert!(traj.completed(), "{:?}", traj.status);
    // rⁿ = (I − ΔtA)Φx̂ⁿ − Φx̂ⁿ⁻¹; x̂ⁿ = (BᵀB)⁻¹Bᵀ Φ x̂ⁿ⁻¹ with B = (I − ΔtA)Φ.
    let b = (DMatrix::identity(4, 4) - &m.a * scheme.dt()) * basis.phi();
    let step = (b.tr_mul(&b)).try_inverse().unwrap() * b.tr_mul(basis.phi());
    let mut x = basis.phi().tr_mul(&m.initial_state(&mu()));
    for n in 0..=10 {
        assert!((&traj.coords[n] - &x).amax() < 1e-9, "step {n}");
        x = &step * x;
    }
}

#[test]
fn full_basis_reproduces_fom() {
    let m = BurgersModel::new(30);
    let scheme = LinearMultistepScheme::backward_euler(5.0, 10).unwrap();
    let fom = solve_fom(&m, &scheme, &mu()).unwrap();
    let basis = ReducedBasis::identity(30, 30).unwrap();
    for kind in [ProjectionKind::Galerkin, ProjectionKind::Lspg] {
        let cfg = RomConfig::new(basis.clone(), scheme.clone(), kind);
        let traj = simulate_rom(&m, &cfg, &mu()).unwrap();
        assert!(traj.completed(), "{kind:?}: {:?}", traj.status);
        let states = traj.decode(&basis, &fom.states[0]).unwrap();
        let err = max_diff(&states, &fom.states);
        assert!(err < 1e-6, "{kind:?}: {err:e}");
    }
}

#[test]
fn zero_velocity_keeps_state() {
    let m = Frozen;
    let basis = ReducedBasis::identity(3, 2).unwrap();
    for (kind, scheme) in [
        (ProjectionKind::Galerkin, LinearMultistepScheme::backward_euler(1.0, 5).unwrap()),
        (ProjectionKind::Lspg, LinearMultistepScheme::backward_euler(1.0, 5).unwrap()),
        (ProjectionKind::Galerkin, LinearMultistepScheme::explicit_euler(1.0, 5).unwrap()),
        (ProjectionKind::Lspg, LinearMultistepScheme::explicit_euler(1.0, 5).unwrap()),
    ] {
        let cfg = RomConfig::new(basis.clone(), scheme, kind)
            .with_reference(ReferenceState::Fixed(DVector::zeros(3)));
        let traj = simulate_rom(&m, &cfg, &mu()).unwrap();
        assert!(traj.completed());
        assert_eq!(traj.coords.len(), 6);
        for c in &traj.coords {
            assert_eq!(c.as_slice(), &[3.0, -1.0]);
        }
    }
}

#[test]
fn explicit_galerkin_and_lspg_coincide() {
    let scheme = LinearMultistepScheme::explicit_euler(5.0, 250).unwrap();
    let (m, basis, _) = burgers_pod(&LinearMultistepScheme::backward_euler(5.0, 50).unwrap(), 6);
    let g = simulate_rom(&m, &RomConfig::new(basis.clone(), scheme.clone(), ProjectionKind::Galerkin), &mu())
        .unwrap();
    let l = simulate_rom(&m, &RomConfig::new(basis, scheme, ProjectionKind::Lspg), &mu()).unwrap();
    assert!(g.completed() && l.completed());
    let d = max_diff(&g.coords, &l.coords);
    assert!(d <= 1e-10, "{d:e}");
}

#[test]
fn galerkin_rsum_holds_at_every_step() {
    let scheme = LinearMultistepScheme::backward_euler(5.0, 20).unwrap();
    let (m, basis, x_ref) = burgers_pod(&scheme, 4);
    let mut set = ConstraintSet::new();
    set.dyn_eq.push(Box::new(Rsum::all_ones(30)));
    let cfg = RomConfig::new(basis.clone(), scheme.clone(), ProjectionKind::Galerkin).with_constraints(set);
    let traj = simulate_rom(&m, &cfg, &mu()).unwrap();
    assert!(traj.completed(), "{:?}", traj.status);
    for (n, (c, v)) in traj.coords.iter().zip(&traj.velocities).enumerate() {
        let x = basis.decode(c, &x_ref).unwrap();
        let r = basis.phi() * v - m.velocity(&x, scheme.time(n), &mu());
        assert!(r.sum().abs() < 1e-9, "step {n}: {:e}", r.sum());
    }
    assert!(traj.diagnostics.iter().all(|d| d.active_constraints == 1));
}

#[test]
fn lspg_rsum_holds_at_every_step() {
    let scheme = LinearMultistepScheme::backward_euler(5.0, 20).unwrap();
    let (m, basis, x_ref) = burgers_pod(&scheme, 4);
    let mut set = ConstraintSet::new();
    set.dyn_eq.push(Box::new(Rsum::all_ones(30)));
    let cfg = RomConfig::new(basis.clone(), scheme.clone(), ProjectionKind::Lspg).with_constraints(set);
    let traj = simulate_rom(&m, &cfg, &mu()).unwrap();
    assert!(traj.completed(), "{:?}", traj.status);
    let states = traj.decode(&basis, &x_ref).unwrap();
    let mut hist = StateHistory::new(1);
    hist.push(&m, states[0].clone(), 0.0, &mu());
    for n in 1..states.len() {
        let r = discrete_residual(&m, &scheme, &hist, &states[n], n, &mu()).unwrap();
        assert!(r.sum().abs() < 1e-9, "step {n}: {:e}", r.sum());
        hist.push(&m, states[n].clone(), scheme.time(n), &mu());
    }
}

#[test]
fn lspg_tvb_bounds_respected() {
    let scheme = LinearMultistepScheme::backward_euler(5.0, 20).unwrap();
    let (m, basis, x_ref) = burgers_pod(&scheme, 4);
    let fom = solve_fom(&m, &scheme, &mu()).unwrap();
    let tv0 = total_variation(fom.states[0].as_slice()).unwrap();
    let bound = 1.0 * tv0;
    let mut set = ConstraintSet::new();
    set.kin_ineq
        .push(Box::new(Tvb::new(FieldLayout::single("u", 30), vec![bound]).unwrap()));
    let cfg = RomConfig::new(basis.clone(), scheme, ProjectionKind::Lspg).with_constraints(set);
    let traj = simulate_rom(&m, &cfg, &mu()).unwrap();
    assert!(traj.completed(), "{:?}", traj.status);
    for x in traj.decode(&basis, &x_ref).unwrap().iter().skip(1) {
        let tv = total_variation(x.as_slice()).unwrap();
        assert!(tv - bound <= 1e-8, "{:e}", tv - bound);
    }
}

#[test]
fn implicit_tvd_keeps_tv_nonincreasing() {
    let scheme = LinearMultistepScheme::backward_euler(5.0, 20).unwrap();
    let (m, basis, x_ref) = burgers_pod(&scheme, 4);
    for kind in [ProjectionKind::Galerkin, ProjectionKind::Lspg] {
        let mut set = ConstraintSet::new();
        set.dyn_ineq.push(Box::new(Tvd::new(FieldLayout::single("u", 30))));
        let cfg = RomConfig::new(basis.clone(), scheme.clone(), kind).with_constraints(set);
        let traj = simulate_rom(&m, &cfg, &mu()).unwrap();
        assert!(traj.completed(), "{kind:?}: {:?}", traj.status);
        let tv: Vec<f64> = traj
            .decode(&basis, &x_ref)
            .unwrap()
            .iter()
            .map(|x| total_variation(x.as_slice()).unwrap())
            .collect();
        for w in tv.windows(2) {
            assert!(w[1] - w[0] <= 1e-8, "{kind:?}: {:e}", w[1] - w[0]);
        }
    }
}

#[test]
fn basis_dimension_mismatch_is_an_error() {
    let m = LinearModel::new();
    let basis = ReducedBasis::identity(3, 2).unwrap();
    let scheme = LinearMultistepScheme::backward_euler(1.0, 2).unwrap();
    let cfg = RomConfig::new(basis, scheme, ProjectionKind::Galerkin);
    assert!(matches!(simulate_rom(&m, &cfg, &mu()), Err(Error::DimensionMismatch { .. })));
}
