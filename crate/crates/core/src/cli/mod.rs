//! Command-line front end.

mod commands;
mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use commands::Artifact;
pub use config::{ArmArg, Command, KindArg, RunConfig};

use crate::error::{Error, Result};
use crate::nuisance::NoiseMode;

/// Name of the resolved configuration written next to every artifact.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Parser)]
#[command(
    name = "gentrans",
    version,
    about = "Generalize and transport treatment effects from study data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Plug-in and doubly robust estimates for both arms and the contrast.
    Estimate(Flags),
    /// RMSE study of the estimators under noisy oracle nuisances.
    Simulate(Flags),
    /// Sensitivity interval and break-even curve.
    Sensitivity(Flags),
    /// Second-order versus doubly robust comparison.
    QuadraticCompare(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub arm: Option<ArmArg>,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta1: Option<f64>,
    #[arg(long)]
    pub delta2: Option<f64>,
    #[arg(long)]
    pub curve_points: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    #[arg(long, value_delimiter = ',')]
    pub k_basis: Option<Vec<usize>>,
    #[arg(long)]
    pub gram_n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum NoiseArg {
    Shared,
    PerRecord,
}

impl Flags {
    fn as_config(&self) -> RunConfig {
        RunConfig {
            source: self.source.clone(),
            target: self.target.clone(),
            schema: self.schema.clone(),
            out: self.out.clone(),
            arm: self.arm,
            kind: self.kind,
            eps: self.eps,
            folds: self.folds,
            seed: self.seed,
            delta1: self.delta1,
            delta2: self.delta2,
            curve_points: self.curve_points,
            n_grid: self.n_grid.clone(),
            alpha_grid: self.alpha_grid.clone(),
            reps: self.reps,
            estimators: self.estimators.clone(),
            noise: self.noise.map(|n| match n {
                NoiseArg::Shared => NoiseMode::Shared,
                NoiseArg::PerRecord => NoiseMode::PerRecord,
            }),
            k_basis: self.k_basis.clone(),
            gram_n: self.gram_n,
            ..RunConfig::default()
        }
    }
}

/// Merges the configuration file with flags and fills defaults.
pub fn resolve(command: Command, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.overlay(&flags.as_config());
    cfg.resolve(command)
}

/// Computes every artifact of a resolved configuration in memory.
pub fn run_config(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let command = cfg
        .command
        .ok_or_else(|| Error::Config("configuration names no command".into()))?;
    let mut artifacts = match command {
        Command::Estimate => commands::estimate(cfg)?,
        Command::Simulate => commands::simulate(cfg)?,
        Command::Sensitivity => commands::sensitivity(cfg)?,
        Command::QuadraticCompare => commands::quadratic(cfg)?,
    };
    artifacts.push(Artifact {
        name: RESOLVED_CONFIG.into(),
        bytes: cfg.to_toml_string()?.into_bytes(),
    });
    Ok(artifacts)
}

/// Writes all artifacts or none: each goes to a temporary file first and
/// everything written is removed if any step fails.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut temps = Vec::new();
    let mut finals = Vec::new();
    let result = (|| -> Result<()> {
        for a in artifacts {
            let tmp = dir.join(format!(".{}.tmp-{}", a.name, std::process::id()));
            temps.push(tmp.clone());
            fs::write(&tmp, &a.bytes)?;
        }
        for (a, tmp) in artifacts.iter().zip(&temps) {
            let dest = dir.join(&a.name);
            fs::rename(tmp, &dest)?;
            finals.push(dest);
        }
        Ok(())
    })();
    if let Err(e) = result {
        for p in temps.iter().chain(&finals) {
            let _ = fs::remove_file(p);
        }
        return Err(e);
    }
    Ok(finals)
}

fn run_parsed(cli: Cli) -> Result<Vec<PathBuf>> {
    let (command, flags) = match cli.command {
        Sub::Estimate(f) => (Command::Estimate, f),
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::Sensitivity(f) => (Command::Sensitivity, f),
        Sub::QuadraticCompare(f) => (Command::QuadraticCompare, f),
    };
    let cfg = resolve(command, &flags)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = flags.workers {
        if w == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let artifacts = pool.install(|| run_config(&cfg))?;
    write_artifacts(cfg.out_dir(), &artifacts)
}

/// Machine-readable error report.
pub fn error_json(e: &Error) -> String {
    json!({ "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() } })
        .to_string()
}

/// Parses arguments, runs, and returns the process exit code. Errors are
/// reported on stderr as JSON.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}
