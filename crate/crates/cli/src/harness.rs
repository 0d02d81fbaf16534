//! Experiment orchestration: FOM runs, the offline basis build, online ROM
//! runs with metric output, the snapshot projection study and basis-size
//! sweeps. Every artifact is a pure function of the configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use conproj_core::basis::{pod, project_snapshot_constrained, ReducedBasis, ReferenceState, SnapshotMatrix};
use conproj_core::constraints::{
    total_variation, ConstraintSet, DynamicConstraint, EnergyConservation, Rsum, Tvb, Tvd,
};
use conproj_core::fom::{solve_fom, FullOrderModel, LinearMultistepScheme, ParamVector, TrajectorySolution};
use conproj_core::layout::FieldLayout;
use conproj_core::metrics::{
    energy_deviation_series, rsum_violation_series, state_error_series, tv_violation_series,
    tvb_violation_series, MetricSeries,
};
use conproj_core::models::{BurgersModel, DiffusionModel, EulerModel, SourceDeposition};
use conproj_core::projection::{simulate_rom, ProjectionKind, RomConfig, RomStatus, RomStepDiagnostics};
use conproj_core::solvers::{HybridOptions, NlpStatus};
use log::{info, warn};
use nalgebra::DVector;

use crate::basis_io::{read_basis, write_basis};
use crate::config::{Combinations, Deposition, ExperimentConfig, ModelId, Projection, SchemeKind, XRef};
use crate::output::{fmt_f64, fmt_mu, write_csv};

pub enum Model {
    Burgers(BurgersModel),
    Euler(EulerModel),
    Diffusion(DiffusionModel),
}

impl Model {
    pub fn build(cfg: &ExperimentConfig) -> Self {
        let g = cfg.model_options.grid;
        match cfg.model {
            ModelId::Burgers => Self::Burgers(BurgersModel::new(g)),
            ModelId::Euler => Self::Euler(EulerModel::new(g)),
            ModelId::Diffusion => Self::Diffusion(DiffusionModel::new(g).with_deposition(
                match cfg.model_options.deposition {
                    Deposition::Nodal => SourceDeposition::Nodal,
                    Deposition::PerCellArea => SourceDeposition::PerCellArea,
                },
            )),
        }
    }

    pub fn fom(&self) -> &dyn FullOrderModel {
        match self {
            Self::Burgers(m) => m,
            Self::Euler(m) => m,
            Self::Diffusion(m) => m,
        }
    }

    pub fn layout(&self) -> FieldLayout {
        match self {
            Self::Burgers(m) => FieldLayout::single("u", m.dim()),
            Self::Euler(m) => m.field_layout(),
            Self::Diffusion(m) => FieldLayout::single("theta", m.dim()),
        }
    }

    pub fn training_set(&self) -> Vec<ParamVector> {
        match self {
            Self::Burgers(_) => BurgersModel::training_set(),
            Self::Euler(_) => EulerModel::training_set(),
            Self::Diffusion(_) => DiffusionModel::training_set(),
        }
    }

    pub fn energy(&self, x: &DVector<f64>) -> Option<f64> {
        match self {
            Self::Diffusion(m) => Some(m.energy(x)),
            _ => None,
        }
    }
}

pub fn scheme(cfg: &ExperimentConfig, model: &Model) -> Result<LinearMultistepScheme> {
    let t = cfg.scheme.final_time.unwrap_or_else(|| model.fom().final_time());
    let n = cfg.scheme.n_steps;
    Ok(match cfg.scheme.kind {
        SchemeKind::BackwardEuler => LinearMultistepScheme::backward_euler(t, n)?,
        SchemeKind::ExplicitEuler => LinearMultistepScheme::explicit_euler(t, n)?,
    })
}

fn params(values: &[f64]) -> Result<ParamVector> {
    Ok(ParamVector::new(values.to_vec())?)
}

fn training_set(cfg: &ExperimentConfig, model: &Model) -> Result<Vec<ParamVector>> {
    match &cfg.training_mu {
        Some(list) => list.iter().map(|m| params(m)).collect(),
        None => Ok(model.training_set()),
    }
}

fn reference(cfg: &ExperimentConfig, model: &Model, mu: &ParamVector) -> (ReferenceState, DVector<f64>) {
    match cfg.basis.x_ref {
        XRef::InitialCondition => (ReferenceState::InitialCondition, model.fom().initial_state(mu)),
        XRef::Zero => {
            let z = DVector::zeros(model.fom().dim());
            (ReferenceState::Fixed(z.clone()), z)
        }
    }
}

fn solve(model: &Model, scheme: &LinearMultistepScheme, mu: &ParamVector) -> Result<TrajectorySolution> {
    let t0 = Instant::now();
    let sol = solve_fom(model.fom(), scheme, mu).with_context(|| format!("FOM at μ = {}", fmt_mu(mu.as_slice())))?;
    info!("FOM μ = {} solved in {:.2?}", fmt_mu(mu.as_slice()), t0.elapsed());
    Ok(sol)
}

fn layout_tv(layout: &FieldLayout, x: &DVector<f64>) -> Result<Vec<f64>> {
    Ok(layout
        .iter()
        .map(|(_, r)| total_variation(&x.as_slice()[r]))
        .collect::<conproj_core::Result<Vec<_>>>()?)
}

// ---- fom -------------------------------------------------------------------

/// Solves the FOM at every online parameter and writes the trajectories
/// under `fom/`.
pub fn run_fom(cfg: &ExperimentConfig) -> Result<Vec<TrajectorySolution>> {
    let model = Model::build(cfg);
    let scheme = scheme(cfg, &model)?;
    let layout = model.layout();
    let dir = cfg.output_dir.join("fom");
    let mut summary = vec![vec![
        "mu_index".to_string(),
        "mu".into(),
        "n_steps".into(),
        "max_newton_iterations".into(),
        "max_newton_residual".into(),
    ]];
    let mut out = Vec::new();
    for (i, m) in cfg.online.mu.iter().enumerate() {
        let mu = params(m)?;
        let sol = solve(&model, &scheme, &mu)?;
        let run_dir = dir.join(format!("mu{}", i + 1));
        let mut header = vec!["step".to_string(), "time".into(), "newton_iterations".into(), "newton_residual".into()];
        header.extend(layout.iter().map(|(f, _)| format!("tv_{f}")));
        if model.energy(&sol.states[0]).is_some() {
            header.push("energy".into());
        }
        let mut rows = vec![header];
        for (n, x) in sol.states.iter().enumerate() {
            let mut row = vec![n.to_string(), fmt_f64(sol.times[n])];
            match n.checked_sub(1).map(|k| &sol.diagnostics[k]) {
                Some(d) => row.extend([d.iterations.to_string(), fmt_f64(d.residual_norm)]),
                None => row.extend([String::new(), String::new()]),
            }
            row.extend(layout_tv(&layout, x)?.into_iter().map(fmt_f64));
            if let Some(e) = model.energy(x) {
                row.push(fmt_f64(e));
            }
            rows.push(row);
        }
        write_csv(&run_dir.join("trajectory.csv"), &rows)?;
        let mut states = vec![["step".to_string(), "time".into()]
            .into_iter()
            .chain((0..x_len(&sol)).map(|j| format!("x{j}")))
            .collect::<Vec<_>>()];
        for (n, x) in sol.states.iter().enumerate() {
            states.push(
                [n.to_string(), fmt_f64(sol.times[n])]
                    .into_iter()
                    .chain(x.iter().map(|&v| fmt_f64(v)))
                    .collect(),
            );
        }
        write_csv(&run_dir.join("states.csv"), &states)?;
        summary.push(vec![
            (i + 1).to_string(),
            fmt_mu(m),
            sol.n_steps().to_string(),
            sol.diagnostics.iter().map(|d| d.iterations).max().unwrap_or(0).to_string(),
            fmt_f64(sol.diagnostics.iter().map(|d| d.residual_norm).fold(0.0, f64::max)),
        ]);
        out.push(sol);
    }
    write_csv(&dir.join("summary.csv"), &summary)?;
    Ok(out)
}

fn x_len(sol: &TrajectorySolution) -> usize {
    sol.states.first().map_or(0, |x| x.len())
}

// ---- offline ---------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OfflineArtifacts {
    pub basis: ReducedBasis,
    pub basis_path: PathBuf,
    /// Per-field max TV over all training states.
    pub training_max_tv: Vec<f64>,
    pub n_snapshots: usize,
}

fn training_tv_path(cfg: &ExperimentConfig) -> PathBuf {
    let basis = cfg.basis_path();
    basis.parent().unwrap_or(Path::new(".")).join("training_tv.csv")
}

/// Solves the FOM at every training parameter, builds the POD basis from
/// the snapshots centered by each run's `x_ref`, and writes it with the
/// snapshot manifest, singular values and per-field training TV.
pub fn run_offline(cfg: &ExperimentConfig) -> Result<OfflineArtifacts> {
    let model = Model::build(cfg);
    let scheme = scheme(cfg, &model)?;
    let layout = model.layout();
    let train = training_set(cfg, &model)?;
    let mut snaps = SnapshotMatrix::new(model.fom().dim());
    let mut max_tv = vec![0.0f64; layout.len()];
    let mut manifest = vec![vec![
        "run".to_string(),
        "mu".into(),
        "snapshots".into(),
        "max_newton_iterations".into(),
    ]];
    for (i, mu) in train.iter().enumerate() {
        let sol = solve(&model, &scheme, mu)?;
        let (_, x_ref) = reference(cfg, &model, mu);
        snaps.push_run(&sol.states, &x_ref)?;
        for x in &sol.states {
            for (m, tv) in max_tv.iter_mut().zip(layout_tv(&layout, x)?) {
                *m = m.max(tv);
            }
        }
        manifest.push(vec![
            (i + 1).to_string(),
            fmt_mu(mu.as_slice()),
            (sol.states.len() - 1).to_string(),
            sol.diagnostics.iter().map(|d| d.iterations).max().unwrap_or(0).to_string(),
        ]);
    }
    let p = cfg.stored_p();
    let basis = pod(&snaps, p).context("building the POD basis")?;
    let basis_path = cfg.basis_path();
    write_basis(&basis_path, &basis)?;
    let dir = basis_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    write_csv(&dir.join("snapshots.csv"), &manifest)?;
    let mut sv = vec![vec!["index".to_string(), "singular_value".into()]];
    sv.extend(
        basis
            .singular_values()
            .iter()
            .enumerate()
            .map(|(i, s)| vec![(i + 1).to_string(), fmt_f64(*s)]),
    );
    write_csv(&dir.join("singular_values.csv"), &sv)?;
    let mut tv = vec![vec!["field".to_string(), "max_tv".into()]];
    tv.extend(layout.iter().zip(&max_tv).map(|((f, _), v)| vec![f.to_string(), fmt_f64(*v)]));
    write_csv(&training_tv_path(cfg), &tv)?;
    info!("basis with p = {p} from {} snapshots written to {}", snaps.ncols(), basis_path.display());
    Ok(OfflineArtifacts {
        basis,
        basis_path,
        training_max_tv: max_tv,
        n_snapshots: snaps.ncols(),
    })
}

/// Reads the basis and training TV written by [`run_offline`].
pub fn load_offline(cfg: &ExperimentConfig) -> Result<OfflineArtifacts> {
    let basis_path = cfg.basis_path();
    let basis = read_basis(&basis_path)?;
    let tv_path = training_tv_path(cfg);
    let training_max_tv = if tv_path.exists() {
        let mut rd = csv::Reader::from_path(&tv_path)?;
        rd.records()
            .map(|r| -> Result<f64> { Ok(r?.get(1).context("training_tv.csv: missing column")?.parse()?) })
            .collect::<Result<Vec<_>>>()?
    } else if cfg.constraints.tvb.is_some() {
        bail!("{} is missing; tvb bounds need the offline stage", tv_path.display());
    } else {
        Vec::new()
    };
    Ok(OfflineArtifacts {
        basis,
        basis_path,
        training_max_tv,
        n_snapshots: 0,
    })
}

// ---- online ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub name: String,
    pub global: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub id: String,
    pub projection: Projection,
    pub mu_index: usize,
    pub mu: Vec<f64>,
    pub p: usize,
    /// Constraints switched on for this run.
    pub constraints: Vec<&'static str>,
    pub status: RomStatus,
    pub metrics: Vec<MetricSummary>,
    pub trajectory: Vec<DVector<f64>>,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.status == RomStatus::Completed
    }

    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn has(&self, constraint: &str) -> bool {
        self.constraints.contains(&constraint)
    }
}

#[derive(Debug, Clone, Default)]
pub struct OnlineReport {
    pub runs: Vec<RunRecord>,
}

impl OnlineReport {
    pub fn all_completed(&self) -> bool {
        self.runs.iter().all(RunRecord::completed)
    }

    pub fn find(&self, projection: Projection, mu_index: usize, constraints: &[&str]) -> Option<&RunRecord> {
        self.runs.iter().find(|r| {
            r.projection == projection
                && r.mu_index == mu_index
                && r.constraints.len() == constraints.len()
                && constraints.iter().all(|c| r.has(c))
        })
    }
}

fn combinations(cfg: &ExperimentConfig) -> Vec<Vec<&'static str>> {
    let names = cfg.constraints.names();
    match cfg.online.combinations {
        Combinations::AllOn => vec![names],
        Combinations::Factorial => (0..1usize << names.len())
            .map(|mask| {
                names
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, n)| *n)
                    .collect()
            })
            .collect(),
    }
}

fn rsum(cfg: &ExperimentConfig, dim: usize) -> Result<Option<Rsum>> {
    let Some(spec) = &cfg.constraints.rsum else {
        return Ok(None);
    };
    if spec.ranges.is_empty() {
        return Ok(Some(Rsum::all_ones(dim)));
    }
    let ranges: Vec<_> = spec.ranges.iter().map(|[a, b]| *a..*b).collect();
    Ok(Some(Rsum::index_blocks(dim, &ranges)?))
}

fn tvb_bounds(cfg: &ExperimentConfig, training_max_tv: &[f64]) -> Option<Vec<f64>> {
    cfg.constraints
        .tvb
        .map(|t| training_max_tv.iter().map(|b| t.factor * b).collect())
}

fn constraint_set(
    cfg: &ExperimentConfig,
    model: &Model,
    on: &[&str],
    bounds: Option<&[f64]>,
) -> Result<ConstraintSet> {
    let dim = model.fom().dim();
    let mut set = ConstraintSet::new();
    for &c in on {
        match c {
            "rsum" => set
                .dyn_eq
                .push(Box::new(rsum(cfg, dim)?.expect("rsum configured")) as Box<dyn DynamicConstraint>),
            "tvd" => set.dyn_ineq.push(Box::new(Tvd::new(model.layout()))),
            "tvb" => set.kin_ineq.push(Box::new(Tvb::new(
                model.layout(),
                bounds.context("tvb bounds need the training TV")?.to_vec(),
            )?)),
            "ec" => match model {
                Model::Diffusion(m) => set.dyn_eq.push(Box::new(EnergyConservation::diffusion(m))),
                _ => bail!("ec needs an energy map"),
            },
            other => unreachable!("unknown constraint {other}"),
        }
    }
    Ok(set)
}

fn core_kind(p: Projection) -> ProjectionKind {
    match p {
        Projection::Galerkin => ProjectionKind::Galerkin,
        Projection::Lspg => ProjectionKind::Lspg,
    }
}

fn status_name(s: Option<NlpStatus>) -> &'static str {
    match s {
        None => "none",
        Some(NlpStatus::Converged) => "converged",
        Some(NlpStatus::MaxIter) => "max_iter",
        Some(NlpStatus::InfeasibleDetected) => "infeasible_detected",
        Some(NlpStatus::LineSearchFailed) => "line_search_failed",
    }
}

/// Runs every (μ, projection, constraint combination) with the given basis
/// and writes per-run CSVs plus `summary.csv` under `dir`.
pub fn run_online_in(
    cfg: &ExperimentConfig,
    basis: &ReducedBasis,
    training_max_tv: &[f64],
    dir: &Path,
) -> Result<OnlineReport> {
    let model = Model::build(cfg);
    let scheme = scheme(cfg, &model)?;
    let layout = model.layout();
    let p = basis.p();
    let bounds = tvb_bounds(cfg, training_max_tv);
    if let Some(b) = &bounds {
        if b.len() != layout.len() {
            bail!("training TV has {} fields, the model has {}", b.len(), layout.len());
        }
    }
    let rsum_c = rsum(cfg, model.fom().dim())?;
    let combos = combinations(cfg);
    let mut report = OnlineReport::default();
    for (i, m) in cfg.online.mu.iter().enumerate() {
        let mu = params(m)?;
        let fom = solve(&model, &scheme, &mu)?;
        let (x_ref_state, x_ref) = reference(cfg, &model, &mu);
        for &projection in &cfg.online.projections {
            for on in &combos {
                let tag = if on.is_empty() { "none".to_string() } else { on.join("-") };
                let id = format!("{projection}_mu{}_p{p}_{tag}", i + 1);
                let tol = cfg.solver.tolerances(projection);
                let mut rom = RomConfig::new(basis.clone(), scheme.clone(), core_kind(projection))
                    .with_constraints(constraint_set(cfg, &model, on, bounds.as_deref())?)
                    .with_solver_options(tol.options())
                    .with_reference(x_ref_state.clone());
                rom.activation_tol = cfg.solver.activation_tol;
                rom.hybrid = HybridOptions {
                    maxfev: cfg.solver.hybrid_maxfev,
                    xtol: cfg.solver.hybrid_xtol,
                };
                let t0 = Instant::now();
                let traj = simulate_rom(model.fom(), &rom, &mu).with_context(|| format!("run {id}"))?;
                let states = traj.decode(basis, &x_ref)?;

                let mut series: Vec<(String, MetricSeries)> =
                    vec![("state_error".into(), state_error_series(&fom.states, &states)?)];
                if let Some(c) = &rsum_c {
                    let s = rsum_violation_series(rom.kind, model.fom(), &rom, &traj, c.matrix(), &mu)?;
                    series.push(("rsum".into(), s));
                }
                if cfg.constraints.tvd {
                    series.push(("tv".into(), tv_violation_series(&states, &layout)?));
                }
                if let Some(b) = &bounds {
                    let tvb = tvb_violation_series(&states, &layout, b)?;
                    for ((f, _), s) in layout.iter().zip(tvb.per_field) {
                        series.push((format!("tvb_{f}"), s));
                    }
                    series.push(("tvb".into(), tvb.max));
                }
                if cfg.constraints.ec {
                    let energy = |x: &DVector<f64>| model.energy(x).expect("ec implies an energy map");
                    series.push((
                        "energy_deviation".into(),
                        energy_deviation_series(&states, energy, &fom.states[0])?,
                    ));
                }

                let run_dir = dir.join(&id);
                write_run(&run_dir, &scheme, &series, &traj.diagnostics)?;
                let status_path = run_dir.join("status.txt");
                match &traj.status {
                    RomStatus::Completed => {
                        if status_path.exists() {
                            fs::remove_file(&status_path)?;
                        }
                        info!("{id}: completed in {:.2?}", t0.elapsed());
                    }
                    RomStatus::Failed { step, reason } => {
                        fs::write(&status_path, format!("failed\nstep = {step}\nreason = {reason}\n"))?;
                        warn!("{id}: failed at step {step}: {reason}");
                    }
                }
                report.runs.push(RunRecord {
                    id,
                    projection,
                    mu_index: i + 1,
                    mu: m.clone(),
                    p,
                    constraints: on.clone(),
                    status: traj.status.clone(),
                    metrics: series
                        .iter()
                        .map(|(name, s)| MetricSummary {
                            name: name.clone(),
                            global: s.global,
                            max: s.max(),
                        })
                        .collect(),
                    trajectory: states,
                });
            }
        }
    }
    write_summary(&dir.join("summary.csv"), &report.runs)?;
    Ok(report)
}

/// [`run_online_in`] with the basis truncated to `basis.p`, writing to
/// `online/`.
pub fn run_online(cfg: &ExperimentConfig, offline: &OfflineArtifacts) -> Result<OnlineReport> {
    let basis = truncated(&offline.basis, cfg.basis.p)?;
    run_online_in(cfg, &basis, &offline.training_max_tv, &cfg.output_dir.join("online"))
}

fn truncated(basis: &ReducedBasis, p: usize) -> Result<ReducedBasis> {
    basis
        .truncate(p)
        .with_context(|| format!("the stored basis has {} columns, {p} requested", basis.p()))
}

/// Online runs for every `p` of the sweep, each under `sweep/p<p>/`, plus a
/// combined `sweep/summary.csv`.
pub fn run_sweep(cfg: &ExperimentConfig, offline: &OfflineArtifacts) -> Result<OnlineReport> {
    if cfg.sweep_p.is_empty() {
        bail!("sweep.p: no basis sizes configured");
    }
    let dir = cfg.output_dir.join("sweep");
    let mut all = OnlineReport::default();
    for &p in &cfg.sweep_p {
        let basis = truncated(&offline.basis, p)?;
        let r = run_online_in(cfg, &basis, &offline.training_max_tv, &dir.join(format!("p{p}")))?;
        all.runs.extend(r.runs);
    }
    write_summary(&dir.join("summary.csv"), &all.runs)?;
    Ok(all)
}

fn write_run(
    dir: &Path,
    scheme: &LinearMultistepScheme,
    series: &[(String, MetricSeries)],
    diagnostics: &[RomStepDiagnostics],
) -> Result<()> {
    let n_steps = scheme.n_steps();
    let mut rows = vec![["step".to_string(), "time".into()]
        .into_iter()
        .chain(series.iter().map(|(n, _)| n.clone()))
        .collect::<Vec<_>>()];
    for n in 1..=n_steps {
        let mut row = vec![n.to_string(), fmt_f64(scheme.time(n))];
        // Steps after a failure have no value.
        row.extend(series.iter().map(|(_, s)| fmt_f64(s.values.get(n - 1).copied().unwrap_or(f64::NAN))));
        rows.push(row);
    }
    write_csv(&dir.join("metrics.csv"), &rows)?;

    let mut diag = vec![[
        "step",
        "time",
        "iterations",
        "residual_norm",
        "nlp_status",
        "objective",
        "kkt_stationarity",
        "kkt_feasibility",
        "kkt_complementarity",
        "active_constraints",
    ]
    .map(String::from)
    .to_vec()];
    for (k, d) in diagnostics.iter().enumerate() {
        diag.push(vec![
            (k + 1).to_string(),
            fmt_f64(scheme.time(k + 1)),
            d.iterations.to_string(),
            fmt_f64(d.residual_norm),
            status_name(d.nlp_status).into(),
            fmt_f64(d.objective),
            fmt_f64(d.kkt_stationarity),
            fmt_f64(d.kkt_feasibility),
            fmt_f64(d.kkt_complementarity),
            d.active_constraints.to_string(),
        ]);
    }
    write_csv(&dir.join("diagnostics.csv"), &diag)
}

fn write_summary(path: &Path, runs: &[RunRecord]) -> Result<()> {
    let mut header: Vec<String> = [
        "run",
        "projection",
        "mu_index",
        "mu",
        "p",
        "constraints",
        "status",
        "failed_step",
    ]
    .map(String::from)
    .to_vec();
    if let Some(first) = runs.first() {
        for m in &first.metrics {
            header.push(format!("{}_global", m.name));
            header.push(format!("{}_max", m.name));
        }
    }
    let mut rows = vec![header];
    for r in runs {
        let (status, step) = match &r.status {
            RomStatus::Completed => ("completed", String::new()),
            RomStatus::Failed { step, .. } => ("failed", step.to_string()),
        };
        let mut row = vec![
            r.id.clone(),
            r.projection.to_string(),
            r.mu_index.to_string(),
            fmt_mu(&r.mu),
            r.p.to_string(),
            if r.constraints.is_empty() { "none".into() } else { r.constraints.join("-") },
            status.into(),
            step,
        ];
        for m in &r.metrics {
            row.push(fmt_f64(m.global));
            row.push(fmt_f64(m.max));
        }
        rows.push(row);
    }
    write_csv(path, &rows)
}

// ---- snapshot projection study ---------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub projection: &'static str,
    /// A field name, or `total`.
    pub field: String,
    pub relative_error: f64,
    /// `None` on the `total` row.
    pub tv: Option<f64>,
    pub bound: Option<f64>,
    pub tvb_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotStudy {
    pub rows: Vec<StudyRow>,
    pub status: NlpStatus,
    pub iterations: usize,
    pub orthogonal_objective: f64,
    pub constrained_objective: f64,
}

impl SnapshotStudy {
    pub fn row(&self, projection: &str, field: &str) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.projection == projection && r.field == field)
    }
}

/// Orthogonal and tvb-constrained projection of one FOM snapshot onto a
/// single-run POD basis. Writes `snapshot/study.csv` and `snapshot/solver.csv`.
pub fn run_snapshot_projection_study(cfg: &ExperimentConfig) -> Result<SnapshotStudy> {
    let s = cfg.snapshot.as_ref().context("no [snapshot] section in the configuration")?;
    let model = Model::build(cfg);
    let scheme = scheme(cfg, &model)?;
    let layout = model.layout();

    let basis_mu = params(&s.basis_mu)?;
    let basis_run = solve(&model, &scheme, &basis_mu)?;
    let mut snaps = SnapshotMatrix::new(model.fom().dim());
    snaps.push_run(&basis_run.states, &reference(cfg, &model, &basis_mu).1)?;
    let basis = pod(&snaps, s.p)?;

    let mu = params(&s.mu)?;
    let sol = solve(&model, &scheme, &mu)?;
    let x = &sol.states[s.step];
    let x_ref = reference(cfg, &model, &mu).1;
    let bounds: Vec<f64> = layout_tv(&layout, x)?.iter().map(|tv| s.bound_factor * tv).collect();

    let orthogonal = basis.decode(&basis.encode(x, &x_ref)?, &x_ref)?;
    let opts = cfg.solver.lspg.options();
    let res = project_snapshot_constrained(&basis, &x_ref, x, &layout, &bounds, &opts)?;
    let constrained = basis.decode(&res.point, &x_ref)?;

    let mut rows = Vec::new();
    for (name, y) in [("orthogonal", &orthogonal), ("constrained", &constrained)] {
        for (((f, r), b), tv) in layout.iter().zip(&bounds).zip(layout_tv(&layout, y)?) {
            let xf = x.rows(r.start, r.len());
            rows.push(StudyRow {
                projection: name,
                field: f.to_string(),
                relative_error: (xf - y.rows(r.start, r.len())).norm() / xf.norm(),
                tv: Some(tv),
                bound: Some(*b),
                tvb_violation: Some((tv - b).max(0.0)),
            });
        }
        rows.push(StudyRow {
            projection: name,
            field: "total".into(),
            relative_error: (x - y).norm() / x.norm(),
            tv: None,
            bound: None,
            tvb_violation: None,
        });
    }
    let study = SnapshotStudy {
        rows,
        status: res.status,
        iterations: res.iterations,
        orthogonal_objective: 0.5 * (x - &orthogonal).norm_squared(),
        constrained_objective: 0.5 * (x - &constrained).norm_squared(),
    };

    let dir = cfg.output_dir.join("snapshot");
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut table = vec![["projection", "field", "relative_error", "tv", "bound", "tvb_violation"]
        .map(String::from)
        .to_vec()];
    for r in &study.rows {
        table.push(vec![
            r.projection.into(),
            r.field.clone(),
            fmt_f64(r.relative_error),
            opt(r.tv),
            opt(r.bound),
            opt(r.tvb_violation),
        ]);
    }
    write_csv(&dir.join("study.csv"), &table)?;
    write_csv(
        &dir.join("solver.csv"),
        &[
            ["status", "iterations", "orthogonal_objective", "constrained_objective"]
                .map(String::from)
                .to_vec(),
            vec![
                status_name(Some(study.status)).into(),
                study.iterations.to_string(),
                fmt_f64(study.orthogonal_objective),
                fmt_f64(study.constrained_objective),
            ],
        ],
    )?;
    Ok(study)
}
