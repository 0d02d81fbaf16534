use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use conproj::config::{parse_config, ExperimentConfig, Projection};
use conproj::harness::{
    load_offline, run_fom, run_offline, run_online, run_snapshot_projection_study, run_sweep,
};

#[derive(Parser)]
#[command(name = "conproj", version, about = "Constrained Galerkin and LSPG reduced-order models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the full-order model at the online parameters.
    Fom(Common),
    /// Solve the training runs and build the POD basis.
    Offline(Common),
    /// Run the reduced-order models with the stored basis.
    Online(Common),
    /// Orthogonal and tvb-constrained projection of one snapshot.
    ProjectSnapshot(Common),
    /// Online runs for every basis size in `sweep.p`.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Basis size for online runs.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n_steps: Option<usize>,
    /// Online parameter point, comma separated; repeat for several.
    #[arg(long, value_parser = parse_mu)]
    mu: Vec<Vec<f64>>,
    #[arg(long, value_enum)]
    projection: Vec<ProjectionArg>,
    #[arg(long)]
    basis_file: Option<PathBuf>,
    /// Basis sizes for `sweep`, comma separated.
    #[arg(long, value_delimiter = ',')]
    sweep_p: Vec<usize>,
    #[arg(long, default_value = "info")]
    log_level: log::LevelFilter,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ProjectionArg {
    Galerkin,
    Lspg,
}

fn parse_mu(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect()
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = parse_config(&self.config)?;
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(p) = self.p {
            cfg.basis.p = p;
        }
        if let Some(n) = self.n_steps {
            cfg.scheme.n_steps = n;
        }
        if !self.mu.is_empty() {
            cfg.online.mu = self.mu.clone();
        }
        if !self.projection.is_empty() {
            cfg.online.projections = self
                .projection
                .iter()
                .map(|p| match p {
                    ProjectionArg::Galerkin => Projection::Galerkin,
                    ProjectionArg::Lspg => Projection::Lspg,
                })
                .collect();
        }
        if let Some(b) = &self.basis_file {
            cfg.basis.file = Some(b.clone());
        }
        if !self.sweep_p.is_empty() {
            cfg.sweep_p = self.sweep_p.clone();
        }
        cfg.validate().context("after command-line overrides")?;
        Ok(cfg)
    }
}

fn write_resolved(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("resolved_config.toml");
    std::fs::write(&path, toml::to_string(cfg)?).with_context(|| format!("writing {}", path.display()))
}

/// `Ok(true)` when every requested run completed.
fn run(cmd: &Command, cfg: &ExperimentConfig) -> Result<bool> {
    write_resolved(cfg)?;
    Ok(match cmd {
        Command::Fom(_) => {
            run_fom(cfg)?;
            true
        }
        Command::Offline(_) => {
            run_offline(cfg)?;
            true
        }
        Command::Online(_) => run_online(cfg, &load_offline(cfg)?)?.all_completed(),
        Command::Sweep(_) => run_sweep(cfg, &load_offline(cfg)?)?.all_completed(),
        Command::ProjectSnapshot(_) => {
            if cfg.snapshot.is_none() {
                bail!("project-snapshot needs a [snapshot] section");
            }
            run_snapshot_projection_study(cfg)?;
            true
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Fom(c)
        | Command::Offline(c)
        | Command::Online(c)
        | Command::ProjectSnapshot(c)
        | Command::Sweep(c) => c,
    };
    env_logger::Builder::new()
        .filter_level(common.log_level)
        .format_timestamp(None)
        .init();
    match common.load().and_then(|cfg| run(&cli.command, &cfg)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("some runs failed; see status.txt in their directories");
            ExitCode::from(1)
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
