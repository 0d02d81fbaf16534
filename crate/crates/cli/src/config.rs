//! Experiment configuration: a TOML file with strict key checking.
//!
//! Fields left out of the file take per-model defaults (scheme, basis size,
//! training and online parameters). Constraints default to none.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    Burgers,
    Euler,
    Diffusion,
}

impl ModelId {
    pub fn n_params(self) -> usize {
        match self {
            Self::Burgers | Self::Euler => 2,
            Self::Diffusion => 4,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Burgers => "burgers",
            Self::Euler => "euler",
            Self::Diffusion => "diffusion",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    BackwardEuler,
    ExplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deposition {
    Nodal,
    PerCellArea,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XRef {
    InitialCondition,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Galerkin,
    Lspg,
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Galerkin => "galerkin",
            Self::Lspg => "lspg",
        })
    }
}

/// Which constraint combinations an online run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combinations {
    /// Every on/off combination of the configured constraints.
    Factorial,
    /// Only the run with every configured constraint on.
    AllOn,
}

// ---- file schema -----------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelId,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
    #[serde(default)]
    model_options: RawModelOptions,
    #[serde(default)]
    scheme: RawScheme,
    #[serde(default)]
    training: RawTraining,
    #[serde(default)]
    basis: RawBasis,
    #[serde(default)]
    constraints: RawConstraints,
    #[serde(default)]
    online: RawOnline,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    solver: RawSolver,
    snapshot: Option<RawSnapshot>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelOptions {
    grid: Option<usize>,
    deposition: Option<Deposition>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    kind: Option<SchemeKind>,
    n_steps: Option<usize>,
    final_time: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    mu: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    p: Option<usize>,
    x_ref: Option<XRef>,
    file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    rsum: Option<RsumSpec>,
    #[serde(default)]
    tvd: bool,
    tvb: Option<TvbSpec>,
    #[serde(default)]
    ec: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOnline {
    mu: Option<Vec<Vec<f64>>>,
    projections: Option<Vec<Projection>>,
    combinations: Option<Combinations>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    p: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    max_iter: Option<usize>,
    ftol: Option<f64>,
    gtol: Option<f64>,
    xtol: Option<f64>,
    constraint_tol: Option<f64>,
    activation_tol: Option<f64>,
    galerkin: Option<RawTolerances>,
    lspg: Option<RawTolerances>,
    hybrid: Option<RawHybrid>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    max_iter: Option<usize>,
    ftol: Option<f64>,
    gtol: Option<f64>,
    xtol: Option<f64>,
    constraint_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHybrid {
    maxfev: Option<usize>,
    xtol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSnapshot {
    basis_mu: Vec<f64>,
    mu: Vec<f64>,
    step: usize,
    p: usize,
    bound_factor: f64,
}

// ---- resolved configuration ------------------------------------------------

/// Rows of the rsum matrix `C`: one 0/1 row per `[start, end)` range. No
/// ranges means a single all-ones row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsumSpec {
    #[serde(default)]
    pub ranges: Vec<[usize; 2]>,
}

/// `b_f = factor × max TV of field f over all training snapshots`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvbSpec {
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelOptions {
    /// Cells (Burgers), nodes (Euler) or nodes per side (diffusion).
    pub grid: usize,
    pub deposition: Deposition,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub n_steps: usize,
    pub final_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisConfig {
    pub p: usize,
    pub x_ref: XRef,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstraintConfig {
    pub rsum: Option<RsumSpec>,
    pub tvd: bool,
    pub tvb: Option<TvbSpec>,
    pub ec: bool,
}

impl ConstraintConfig {
    /// Names of the configured constraints, in a fixed order.
    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.rsum.is_some() {
            out.push("rsum");
        }
        if self.tvd {
            out.push("tvd");
        }
        if self.tvb.is_some() {
            out.push("tvb");
        }
        if self.ec {
            out.push("ec");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnlineConfig {
    pub mu: Vec<Vec<f64>>,
    pub projections: Vec<Projection>,
    pub combinations: Combinations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub max_iter: usize,
    pub ftol: f64,
    pub gtol: f64,
    pub xtol: f64,
    pub constraint_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = conproj_core::solvers::SolverOptions::default();
        Self {
            max_iter: d.max_iter,
            ftol: d.ftol,
            gtol: d.gtol,
            xtol: d.xtol,
            constraint_tol: d.constraint_tol,
        }
    }
}

impl Tolerances {
    fn apply(mut self, raw: &RawTolerances) -> Self {
        self.max_iter = raw.max_iter.unwrap_or(self.max_iter);
        self.ftol = raw.ftol.unwrap_or(self.ftol);
        self.gtol = raw.gtol.unwrap_or(self.gtol);
        self.xtol = raw.xtol.unwrap_or(self.xtol);
        self.constraint_tol = raw.constraint_tol.unwrap_or(self.constraint_tol);
        self
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.max_iter == 0 {
            bail!("{path}.max_iter: must be at least 1");
        }
        for (key, v) in [
            ("ftol", self.ftol),
            ("gtol", self.gtol),
            ("xtol", self.xtol),
            ("constraint_tol", self.constraint_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{path}.{key}: must be positive, got {v}");
            }
        }
        Ok(())
    }

    pub fn options(&self) -> conproj_core::solvers::SolverOptions {
        conproj_core::solvers::SolverOptions {
            max_iter: self.max_iter,
            ftol: self.ftol,
            gtol: self.gtol,
            xtol: self.xtol,
            constraint_tol: self.constraint_tol,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub galerkin: Tolerances,
    pub lspg: Tolerances,
    pub activation_tol: f64,
    pub hybrid_maxfev: usize,
    pub hybrid_xtol: f64,
}

impl SolverConfig {
    pub fn tolerances(&self, kind: Projection) -> &Tolerances {
        match kind {
            Projection::Galerkin => &self.galerkin,
            Projection::Lspg => &self.lspg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotConfig {
    pub basis_mu: Vec<f64>,
    pub mu: Vec<f64>,
    pub step: usize,
    pub p: usize,
    pub bound_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelId,
    pub output_dir: PathBuf,
    /// Reserved; no computation is randomized.
    pub seed: u64,
    pub model_options: ModelOptions,
    pub scheme: SchemeConfig,
    /// `None` means the model's built-in training set.
    pub training_mu: Option<Vec<Vec<f64>>>,
    pub basis: BasisConfig,
    pub constraints: ConstraintConfig,
    pub online: OnlineConfig,
    pub sweep_p: Vec<usize>,
    pub solver: SolverConfig,
    pub snapshot: Option<SnapshotConfig>,
}

impl ExperimentConfig {
    /// Where the offline stage writes, and the online stage reads, the basis.
    pub fn basis_path(&self) -> PathBuf {
        self.basis
            .file
            .clone()
            .unwrap_or_else(|| self.output_dir.join("offline").join("basis.bin"))
    }

    /// Basis size the offline stage stores: large enough for the sweep.
    pub fn stored_p(&self) -> usize {
        self.sweep_p.iter().copied().chain([self.basis.p]).max().unwrap_or(self.basis.p)
    }

    /// Checks cross-field consistency. Called by [`parse_config`] and again
    /// after command-line overrides.
    pub fn validate(&self) -> Result<()> {
        let np = self.model.n_params();
        let check_mu = |path: &str, mu: &[f64]| -> Result<()> {
            if mu.len() != np {
                bail!("{path}: {} needs {np} parameters, got {}", self.model, mu.len());
            }
            if mu.iter().any(|v| !v.is_finite()) {
                bail!("{path}: parameters must be finite");
            }
            Ok(())
        };
        if self.model_options.grid == 0 {
            bail!("model_options.grid: must be at least 1");
        }
        if self.model_options.deposition != Deposition::Nodal && self.model != ModelId::Diffusion {
            bail!("model_options.deposition: only the diffusion model has sources");
        }
        if self.scheme.n_steps == 0 {
            bail!("scheme.n_steps: must be at least 1");
        }
        if let Some(t) = self.scheme.final_time {
            if !(t > 0.0 && t.is_finite()) {
                bail!("scheme.final_time: must be positive, got {t}");
            }
        }
        if let Some(train) = &self.training_mu {
            if train.is_empty() {
                bail!("training.mu: needs at least one parameter point");
            }
            for (i, mu) in train.iter().enumerate() {
                check_mu(&format!("training.mu[{i}]"), mu)?;
            }
        }
        if self.basis.p == 0 {
            bail!("basis.p: must be at least 1");
        }
        if self.sweep_p.contains(&0) {
            bail!("sweep.p: basis sizes must be at least 1");
        }
        if self.online.mu.is_empty() {
            bail!("online.mu: needs at least one parameter point");
        }
        for (i, mu) in self.online.mu.iter().enumerate() {
            check_mu(&format!("online.mu[{i}]"), mu)?;
        }
        if self.online.projections.is_empty() {
            bail!("online.projections: needs at least one of \"galerkin\", \"lspg\"");
        }
        let dim = self.state_dim();
        if let Some(rsum) = &self.constraints.rsum {
            for (i, [a, b]) in rsum.ranges.iter().enumerate() {
                if a >= b || *b > dim {
                    bail!("constraints.rsum.ranges[{i}]: [{a}, {b}) is not a non-empty range within 0..{dim}");
                }
            }
        }
        if let Some(tvb) = &self.constraints.tvb {
            if !(tvb.factor > 0.0 && tvb.factor.is_finite()) {
                bail!("constraints.tvb.factor: must be positive, got {}", tvb.factor);
            }
        }
        if self.constraints.ec && self.model != ModelId::Diffusion {
            bail!("constraints.ec: no energy map is defined for the {} model", self.model);
        }
        self.solver.galerkin.validate("solver.galerkin")?;
        self.solver.lspg.validate("solver.lspg")?;
        if !(self.solver.activation_tol >= 0.0 && self.solver.activation_tol.is_finite()) {
            bail!("solver.activation_tol: must be nonnegative");
        }
        if self.solver.hybrid_maxfev == 0 || !(self.solver.hybrid_xtol > 0.0) {
            bail!("solver.hybrid: maxfev must be at least 1 and xtol positive");
        }
        if let Some(s) = &self.snapshot {
            check_mu("snapshot.basis_mu", &s.basis_mu)?;
            check_mu("snapshot.mu", &s.mu)?;
            if s.step == 0 || s.step > self.scheme.n_steps {
                bail!("snapshot.step: must be in 1..={}, got {}", self.scheme.n_steps, s.step);
            }
            if s.p == 0 {
                bail!("snapshot.p: must be at least 1");
            }
            if !(s.bound_factor > 0.0) {
                bail!("snapshot.bound_factor: must be positive, got {}", s.bound_factor);
            }
        }
        Ok(())
    }

    /// Full-order state dimension implied by the model and grid.
    pub fn state_dim(&self) -> usize {
        let g = self.model_options.grid;
        match self.model {
            ModelId::Burgers => g,
            ModelId::Euler => 3 * g,
            ModelId::Diffusion => g * g,
        }
    }
}

struct ModelDefaults {
    grid: usize,
    scheme: SchemeKind,
    n_steps: usize,
    p: usize,
    online: Vec<Vec<f64>>,
}

fn defaults(model: ModelId) -> ModelDefaults {
    match model {
        ModelId::Burgers => ModelDefaults {
            grid: 200,
            scheme: SchemeKind::BackwardEuler,
            n_steps: 150,
            p: 10,
            online: vec![vec![0.9, 0.3], vec![1.3, 0.7]],
        },
        ModelId::Euler => ModelDefaults {
            grid: 100,
            scheme: SchemeKind::ExplicitEuler,
            n_steps: 200,
            p: 20,
            online: vec![vec![1.25, 1.5]],
        },
        ModelId::Diffusion => ModelDefaults {
            grid: 33,
            scheme: SchemeKind::BackwardEuler,
            n_steps: 100,
            p: 10,
            online: vec![vec![-1e6, 1e6, 1e-4, 0.2]],
        },
    }
}

/// Parses TOML text. Relative paths stay relative to the working directory.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text)?;
    let d = defaults(raw.model);
    let base = Tolerances::default().apply(&RawTolerances {
        max_iter: raw.solver.max_iter,
        ftol: raw.solver.ftol,
        gtol: raw.solver.gtol,
        xtol: raw.solver.xtol,
        constraint_tol: raw.solver.constraint_tol,
    });
    let hybrid = raw.solver.hybrid.unwrap_or_default();
    let hybrid_default = conproj_core::solvers::HybridOptions::default();
    let cfg = ExperimentConfig {
        model: raw.model,
        output_dir: raw
            .output_dir
            .unwrap_or_else(|| PathBuf::from("out").join(raw.model.to_string())),
        seed: raw.seed.unwrap_or(0),
        model_options: ModelOptions {
            grid: raw.model_options.grid.unwrap_or(d.grid),
            deposition: raw.model_options.deposition.unwrap_or(Deposition::Nodal),
        },
        scheme: SchemeConfig {
            kind: raw.scheme.kind.unwrap_or(d.scheme),
            n_steps: raw.scheme.n_steps.unwrap_or(d.n_steps),
            final_time: raw.scheme.final_time,
        },
        training_mu: raw.training.mu,
        basis: BasisConfig {
            p: raw.basis.p.unwrap_or(d.p),
            x_ref: raw.basis.x_ref.unwrap_or(XRef::InitialCondition),
            file: raw.basis.file,
        },
        constraints: ConstraintConfig {
            rsum: raw.constraints.rsum,
            tvd: raw.constraints.tvd,
            tvb: raw.constraints.tvb,
            ec: raw.constraints.ec,
        },
        online: OnlineConfig {
            mu: raw.online.mu.unwrap_or(d.online),
            projections: raw
                .online
                .projections
                .unwrap_or_else(|| vec![Projection::Galerkin, Projection::Lspg]),
            combinations: raw.online.combinations.unwrap_or(Combinations::Factorial),
        },
        sweep_p: raw.sweep.p.unwrap_or_default(),
        solver: SolverConfig {
            galerkin: base.apply(&raw.solver.galerkin.unwrap_or_default()),
            lspg: base.apply(&raw.solver.lspg.unwrap_or_default()),
            activation_tol: raw.solver.activation_tol.unwrap_or(0.0),
            hybrid_maxfev: hybrid.maxfev.unwrap_or(hybrid_default.maxfev),
            hybrid_xtol: hybrid.xtol.unwrap_or(hybrid_default.xtol),
        },
        snapshot: raw.snapshot.map(|s| SnapshotConfig {
            basis_mu: s.basis_mu,
            mu: s.mu,
            step: s.step,
            p: s.p,
            bound_factor: s.bound_factor,
        }),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config_str(&text).with_context(|| format!("invalid configuration {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_burgers_config_gets_defaults() {
        let cfg = parse_config_str("model = \"burgers\"").unwrap();
        assert_eq!(cfg.scheme.kind, SchemeKind::BackwardEuler);
        assert_eq!(cfg.scheme.n_steps, 150);
        assert_eq!(cfg.basis.p, 10);
        assert_eq!(cfg.online.mu, vec![vec![0.9, 0.3], vec![1.3, 0.7]]);
        assert_eq!(cfg.online.projections, vec![Projection::Galerkin, Projection::Lspg]);
        assert!(cfg.constraints.names().is_empty());
        assert_eq!(cfg.solver.galerkin, Tolerances::default());
        assert_eq!(cfg.output_dir, PathBuf::from("out/burgers"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config_str("model = \"burgers\"\n[scheme]\nsteps = 3\n").unwrap_err();
        assert!(format!("{err:#}").contains("steps"), "{err:#}");
        let err = parse_config_str("model = \"burgers\"\nbogus = 1\n").unwrap_err();
        assert!(format!("{err:#}").contains("bogus"), "{err:#}");
    }

    #[test]
    fn nonpositive_tvb_factor_is_rejected() {
        for f in ["0.0", "-1.2"] {
            let text = format!("model = \"euler\"\n[constraints]\ntvb = {{ factor = {f} }}\n");
            let err = parse_config_str(&text).unwrap_err();
            assert!(format!("{err:#}").contains("constraints.tvb.factor"), "{err:#}");
        }
    }

    #[test]
    fn ec_needs_an_energy_map() {
        let err = parse_config_str("model = \"burgers\"\n[constraints]\nec = true\n").unwrap_err();
        assert!(format!("{err:#}").contains("constraints.ec"));
        assert!(parse_config_str("model = \"diffusion\"\n[constraints]\nec = true\n").is_ok());
    }

    #[test]
    fn parameter_counts_are_checked() {
        let err = parse_config_str("model = \"diffusion\"\n[online]\nmu = [[1.0, 2.0]]\n").unwrap_err();
        assert!(format!("{err:#}").contains("online.mu[0]"), "{err:#}");
    }

    #[test]
    fn rsum_ranges_must_fit_the_state() {
        let err = parse_config_str("model = \"burgers\"\n[constraints]\nrsum = { ranges = [[0, 201]] }\n")
            .unwrap_err();
        assert!(format!("{err:#}").contains("constraints.rsum.ranges[0]"), "{err:#}");
        let cfg = parse_config_str("model = \"burgers\"\n[constraints]\nrsum = {}\n").unwrap();
        assert_eq!(cfg.constraints.rsum, Some(RsumSpec::default()));
    }

    #[test]
    fn projection_tolerances_fall_back_to_shared_ones() {
        let cfg = parse_config_str(
            "model = \"euler\"\n[solver]\nmax_iter = 250\n[solver.galerkin]\ngtol = 1e-6\n[solver.lspg]\nftol = 1e-6\n",
        )
        .unwrap();
        assert_eq!(cfg.solver.galerkin.max_iter, 250);
        assert_eq!(cfg.solver.galerkin.gtol, 1e-6);
        assert_eq!(cfg.solver.lspg.gtol, Tolerances::default().gtol);
        assert_eq!(cfg.solver.lspg.ftol, 1e-6);
    }

    #[test]
    fn stored_basis_covers_the_sweep() {
        let cfg = parse_config_str("model = \"euler\"\n[sweep]\np = [10, 40, 25]\n").unwrap();
        assert_eq!(cfg.stored_p(), 40);
    }
}
