//! Error and constraint-violation metrics over trajectories.
//!
//! Every series covers steps `n = 1 … N`, where `N` is the last stored step
//! (shorter than `N_T` for failed runs); index `0` of the inputs is `x⁰`.
//! Global aggregates divide by that `N`.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::constraints::total_variation;
use crate::error::{check_dim, Error, Result};
use crate::fom::{continuous_residual, discrete_residual, FullOrderModel, ParamVector, StateHistory};
use crate::layout::FieldLayout;
use crate::linalg::SparseMatrix;
use crate::projection::{velocity_map_at, ProjectionKind, ReducedTrajectory, RomConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    StateError,
    GalerkinRsum,
    LspgRsum,
    Tv,
    /// `Some(f)` for field `f`, `None` for the max over fields.
    Tvb(Option<usize>),
    EnergyDeviation,
}

impl MetricKind {
    pub fn name(&self) -> alloc::string::String {
        use alloc::string::ToString;
        match self {
            Self::StateError => "state_error".to_string(),
            Self::GalerkinRsum => "rsum_galerkin".to_string(),
            Self::LspgRsum => "rsum_lspg".to_string(),
            Self::Tv => "tv".to_string(),
            Self::Tvb(None) => "tvb".to_string(),
            Self::Tvb(Some(f)) => alloc::format!("tvb_{f}"),
            Self::EnergyDeviation => "energy_deviation".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub kind: MetricKind,
    /// `εⁿ` for `n = 1 … N`.
    pub values: Vec<f64>,
    pub global: f64,
}

impl MetricSeries {
    fn mean(kind: MetricKind, values: Vec<f64>) -> Self {
        let global = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        Self { kind, values, global }
    }

    /// `(1/N) √Σ (εⁿ)²`.
    fn root_mean(kind: MetricKind, values: Vec<f64>) -> Self {
        let global = if values.is_empty() {
            0.0
        } else {
            libm::sqrt(values.iter().map(|v| v * v).sum::<f64>()) / values.len() as f64
        };
        Self { kind, values, global }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }
}

fn require_start(states: &[DVector<f64>]) -> Result<()> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("trajectory has no states".into()));
    }
    Ok(())
}

/// `‖xⁿ − x̃ⁿ‖/‖xⁿ‖` per step; global `√Σ‖xⁿ − x̃ⁿ‖² / √Σ‖xⁿ‖²`. `rom` may be
/// shorter than `fom`.
pub fn state_error_series(fom: &[DVector<f64>], rom: &[DVector<f64>]) -> Result<MetricSeries> {
    require_start(rom)?;
    if rom.len() > fom.len() {
        return Err(Error::DimensionMismatch {
            context: "ROM trajectory length",
            expected: fom.len(),
            found: rom.len(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut values = Vec::with_capacity(rom.len() - 1);
    for (x, y) in fom.iter().zip(rom).skip(1) {
        check_dim("ROM state", x.len(), y.len())?;
        let e2 = (x - y).norm_squared();
        let x2 = x.norm_squared();
        values.push(libm::sqrt(e2) / libm::sqrt(x2));
        num += e2;
        den += x2;
    }
    let global = if values.is_empty() {
        0.0
    } else {
        libm::sqrt(num) / libm::sqrt(den)
    };
    Ok(MetricSeries {
        kind: MetricKind::StateError,
        values,
        global,
    })
}

/// `‖C r(Φf̂(x̂ⁿ, tⁿ), x̃ⁿ, tⁿ)‖` with `f̂` from the configured velocity map.
/// Cached `traj.velocities` are used when present.
pub fn galerkin_rsum_series(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    traj: &ReducedTrajectory,
    c: &SparseMatrix,
    mu: &ParamVector,
) -> Result<MetricSeries> {
    require_start(&traj.coords)?;
    check_dim("rsum matrix columns", model.dim(), c.ncols())?;
    let x_ref = config.x_ref.eval(model, mu);
    let cached = traj.velocities.len() == traj.coords.len();
    let mut warm = None;
    let mut values = Vec::with_capacity(traj.coords.len() - 1);
    for n in 1..traj.coords.len() {
        let t = traj.times[n];
        let v_hat = if cached {
            traj.velocities[n].clone()
        } else {
            let v = velocity_map_at(model, config, &x_ref, &traj.coords[n], t, mu, warm.as_ref())?;
            warm = Some(v.clone());
            v
        };
        let x = config.basis.decode(&traj.coords[n], &x_ref)?;
        let r = continuous_residual(model, &(config.basis.phi() * v_hat), &x, t, mu)?;
        values.push(c.mul_vec(&r).norm());
    }
    Ok(MetricSeries::root_mean(MetricKind::GalerkinRsum, values))
}

/// `‖C rⁿ(x̃ⁿ)‖` over decoded states.
pub fn lspg_rsum_series(
    model: &dyn FullOrderModel,
    config: &RomConfig,
    states: &[DVector<f64>],
    c: &SparseMatrix,
    mu: &ParamVector,
) -> Result<MetricSeries> {
    require_start(states)?;
    check_dim("rsum matrix columns", model.dim(), c.ncols())?;
    let scheme = &config.scheme;
    let k = scheme.k();
    let mut history = StateHistory::new(k);
    let mut values = Vec::with_capacity(states.len() - 1);
    for (n, x) in states.iter().enumerate() {
        if n >= k {
            let r = discrete_residual(model, scheme, &history, x, n, mu)?;
            values.push(c.mul_vec(&r).norm());
        } else if n > 0 {
            // Start-up states are given, not solved for.
            values.push(0.0);
        }
        history.push(model, x.clone(), scheme.time(n), mu);
    }
    Ok(MetricSeries::root_mean(MetricKind::LspgRsum, values))
}

/// Dispatches to [`galerkin_rsum_series`] or [`lspg_rsum_series`].
pub fn rsum_violation_series(
    kind: ProjectionKind,
    model: &dyn FullOrderModel,
    config: &RomConfig,
    traj: &ReducedTrajectory,
    c: &SparseMatrix,
    mu: &ParamVector,
) -> Result<MetricSeries> {
    match kind {
        ProjectionKind::Galerkin => galerkin_rsum_series(model, config, traj, c, mu),
        ProjectionKind::Lspg => {
            let x_ref = config.x_ref.eval(model, mu);
            lspg_rsum_series(model, config, &traj.decode(&config.basis, &x_ref)?, c, mu)
        }
    }
}

fn layout_tv(layout: &FieldLayout, x: &DVector<f64>) -> Result<f64> {
    check_dim("state", layout.dim(), x.len())?;
    layout
        .iter()
        .map(|(_, r)| total_variation(&x.as_slice()[r]))
        .sum()
}

/// `max(0, TV(x̃ⁿ) − TV(x̃ⁿ⁻¹))`, TV summed over the fields of `layout`.
pub fn tv_violation_series(states: &[DVector<f64>], layout: &FieldLayout) -> Result<MetricSeries> {
    require_start(states)?;
    let tv = states
        .iter()
        .map(|x| layout_tv(layout, x))
        .collect::<Result<Vec<_>>>()?;
    let values = tv.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    Ok(MetricSeries::mean(MetricKind::Tv, values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvbSeries {
    pub per_field: Vec<MetricSeries>,
    /// Per-step max over fields.
    pub max: MetricSeries,
}

/// `max(0, TV(x̃ⁿ_f) − b_f)` per field, plus the per-step max over fields.
pub fn tvb_violation_series(
    states: &[DVector<f64>],
    layout: &FieldLayout,
    bounds: &[f64],
) -> Result<TvbSeries> {
    require_start(states)?;
    check_dim("tvb bounds", layout.len(), bounds.len())?;
    let mut per_field: Vec<Vec<f64>> = (0..layout.len()).map(|_| Vec::new()).collect();
    for x in &states[1..] {
        check_dim("state", layout.dim(), x.len())?;
        for (f, ((_, r), b)) in layout.iter().zip(bounds).enumerate() {
            per_field[f].push((total_variation(&x.as_slice()[r])? - b).max(0.0));
        }
    }
    let max = (0..states.len() - 1)
        .map(|n| per_field.iter().fold(0.0f64, |m, s| m.max(s[n])))
        .collect();
    Ok(TvbSeries {
        per_field: per_field
            .into_iter()
            .enumerate()
            .map(|(f, v)| MetricSeries::mean(MetricKind::Tvb(Some(f)), v))
            .collect(),
        max: MetricSeries::mean(MetricKind::Tvb(None), max),
    })
}

/// `|E(x̃ⁿ) − E(x⁰)|`.
pub fn energy_deviation_series(
    states: &[DVector<f64>],
    energy: impl Fn(&DVector<f64>) -> f64,
    x0: &DVector<f64>,
) -> Result<MetricSeries> {
    require_start(states)?;
    let e0 = energy(x0);
    let values = states[1..].iter().map(|x| (energy(x) - e0).abs()).collect();
    Ok(MetricSeries::mean(MetricKind::EnergyDeviation, values))
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use super::*;
    use crate::basis::ReducedBasis;
    use crate::constraints::{ConstraintSet, Rsum};
    use crate::fom::{solve_fom, LinearMultistepScheme};
    use crate::models::BurgersModel;
    use crate::projection::simulate_rom;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    fn mu() -> ParamVector {
        ParamVector::from(&[1.3, 0.7][..])
    }

    #[test]
    fn state_error_exact_and_zero() {
        let fom = vec![v(&[1.0, 0.0]), v(&[3.0, 4.0]), v(&[0.0, 2.0])];
        let s = state_error_series(&fom, &fom).unwrap();
        assert_eq!(s.values, vec![0.0, 0.0]);
        assert_eq!(s.global, 0.0);
        let zeros = vec![v(&[0.0, 0.0]); 3];
        let s = state_error_series(&fom, &zeros).unwrap();
        assert_eq!(s.values, vec![1.0, 1.0]);
        assert!((s.global - 1.0).abs() < 1e-15);
    }

    #[test]
    fn state_error_two_step_toy() {
        let fom = vec![v(&[9.0, 9.0]), v(&[3.0, 4.0]), v(&[0.0, 2.0])];
        let rom = vec![v(&[0.0, 0.0]), v(&[3.0, 3.0]), v(&[1.0, 2.0])];
        let s = state_error_series(&fom, &rom).unwrap();
        // ‖e¹‖ = 1, ‖x¹‖ = 5; ‖e²‖ = 1, ‖x²‖ = 2; global √2/√29.
        assert!((s.values[0] - 0.2).abs() < 1e-15);
        assert!((s.values[1] - 0.5).abs() < 1e-15);
        assert!((s.global - libm::sqrt(2.0 / 29.0)).abs() < 1e-15);
    }

    #[test]
    fn state_error_invariant_under_basis_rotation() {
        let s = 0.5f64.sqrt();
        let phi = nalgebra::DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, s, s]);
        let (c, sn) = (0.6, 0.8);
        let q = nalgebra::DMatrix::from_row_slice(2, 2, &[c, -sn, sn, c]);
        let b1 = ReducedBasis::from_matrix(phi.clone()).unwrap();
        let b2 = ReducedBasis::from_matrix(&phi * &q).unwrap();
        let x_ref = v(&[0.1, 0.2, 0.3]);
        let fom = vec![v(&[1.0, 1.0, 1.0]), v(&[1.0, 2.0, 0.5]), v(&[0.2, -1.0, 0.4])];
        let coords = vec![v(&[0.9, 1.1]), v(&[1.0, 1.2]), v(&[0.1, -0.4])];
        let d1: Vec<_> = coords.iter().map(|c| b1.decode(c, &x_ref).unwrap()).collect();
        let d2: Vec<_> = coords.iter().map(|c| b2.decode(&q.tr_mul(c), &x_ref).unwrap()).collect();
        let e1 = state_error_series(&fom, &d1).unwrap();
        let e2 = state_error_series(&fom, &d2).unwrap();
        for (a, b) in e1.values.iter().zip(&e2.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn tv_series_hand_built() {
        let layout = FieldLayout::single("u", 3);
        // TV: 1, 0.5, 1.0, 0.25.
        let states = vec![v(&[0.0, 1.0, 1.0]), v(&[0.0, 0.5, 0.5]), v(&[0.0, 1.0, 1.0]), v(&[0.0, 0.25, 0.0])];
        let s = tv_violation_series(&states, &layout).unwrap();
        assert_eq!(s.values, vec![0.0, 0.5, 0.0]);
        assert!((s.global - 0.5 / 3.0).abs() < 1e-15);
        let constant = vec![v(&[1.0, 2.0, 0.0]); 4];
        assert!(tv_violation_series(&constant, &layout).unwrap().values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tvb_series_per_field_and_max() {
        let layout = FieldLayout::uniform(&["a", "b"], 2);
        let states = vec![v(&[0.0, 0.0, 0.0, 0.0]), v(&[0.0, 2.0, 0.0, 1.0]), v(&[0.0, 1.0, 0.0, 3.0])];
        let s = tvb_violation_series(&states, &layout, &[1.0, 2.0]).unwrap();
        assert_eq!(s.per_field[0].values, vec![1.0, 0.0]);
        assert_eq!(s.per_field[1].values, vec![0.0, 1.0]);
        assert_eq!(s.max.values, vec![1.0, 1.0]);
        assert_eq!(s.max.global, 1.0);
        // TV exactly at the bound.
        let s = tvb_violation_series(&states, &layout, &[2.0, 3.0]).unwrap();
        assert_eq!(s.max.values, vec![0.0, 0.0]);
    }

    #[test]
    fn energy_deviation_two_step() {
        let e = |x: &DVector<f64>| x.sum();
        let x0 = v(&[1.0, 1.0]);
        let states = vec![x0.clone(), v(&[2.0, 0.0]), v(&[3.0, 0.5])];
        let s = energy_deviation_series(&states, e, &x0).unwrap();
        assert_eq!(s.values, vec![0.0, 1.5]);
        assert_eq!(s.global, 0.75);
    }

    #[test]
    fn globals_recompute_from_series() {
        let layout = FieldLayout::single("u", 2);
        let states = vec![v(&[0.0, 1.0]), v(&[0.0, 3.0]), v(&[0.0, 2.0]), v(&[0.0, 5.0])];
        let s = tv_violation_series(&states, &layout).unwrap();
        let mean = s.values.iter().sum::<f64>() / 3.0;
        assert!((s.global - mean).abs() < 1e-14);
    }

    #[test]
    fn lspg_rsum_of_fom_is_at_newton_tolerance_and_zero_rows_vanish() {
        let m = BurgersModel::new(30);
        let scheme = LinearMultistepScheme::backward_euler(5.0, 10).unwrap();
        let fom = solve_fom(&m, &scheme, &mu()).unwrap();
        let cfg = crate::projection::RomConfig::new(
            ReducedBasis::identity(30, 30).unwrap(),
            scheme,
            ProjectionKind::Lspg,
        );
        let c = Rsum::all_ones(30);
        let s = lspg_rsum_series(&m, &cfg, &fom.states, c.matrix(), &mu()).unwrap();
        assert!(s.max() < 1e-8, "{:e}", s.max());
        let empty = SparseMatrix::from_triplets(0, 30, &[]);
        let s = lspg_rsum_series(&m, &cfg, &fom.states, &empty, &mu()).unwrap();
        assert!(s.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn galerkin_rsum_recomputed_matches_cached() {
        let m = BurgersModel::new(30);
        let scheme = LinearMultistepScheme::backward_euler(5.0, 10).unwrap();
        let fom = solve_fom(&m, &scheme, &mu()).unwrap();
        let mut snaps = crate::basis::SnapshotMatrix::new(30);
        snaps.push_run(&fom.states, &fom.states[0]).unwrap();
        let basis = crate::basis::pod(&snaps, 4).unwrap();
        let mut set = ConstraintSet::new();
        set.dyn_eq.push(alloc::boxed::Box::new(Rsum::all_ones(30)));
        let cfg = RomConfig::new(basis, scheme, ProjectionKind::Galerkin).with_constraints(set);
        let mut traj = simulate_rom(&m, &cfg, &mu()).unwrap();
        let c = Rsum::all_ones(30);
        let cached = galerkin_rsum_series(&m, &cfg, &traj, c.matrix(), &mu()).unwrap();
        traj.velocities.clear();
        let fresh = galerkin_rsum_series(&m, &cfg, &traj, c.matrix(), &mu()).unwrap();
        assert!(cached.max() < 1e-9);
        assert!(fresh.max() < 1e-9);
        let g = libm::sqrt(cached.values.iter().map(|x| x * x).sum::<f64>()) / 10.0;
        assert!((cached.global - g).abs() < 1e-14);
    }
}
