//! The `bargain` command-line tool.
//!
//! Every subcommand reads one TOML run configuration, writes CSV/JSON
//! artifacts into the output directory and records a manifest with the
//! config hash, seed and tool version.

mod commands;
mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    DecomposeSection, EstimateMethod, EstimateSection, HeatmapSection, MonteCarloSection, RunConfig, ValidateSection,
    SCHEMA_VERSION,
};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "bargain", version, about = "Bilateral bargaining model of firm-to-firm trade pricing")]
pub struct Cli {
    /// Run configuration (TOML, schema_version = 1).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "BARGAIN_OUT", default_value = "bargain-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Pass-through grids over (s, x) for the six bargaining/returns regimes.
    Heatmap,
    /// Generate a transaction panel with a tariff event.
    Simulate,
    /// Estimate bargaining power and returns to scale from a panel.
    Estimate,
    /// Monte Carlo study of the estimator.
    Montecarlo,
    /// IV goodness-of-fit test of predicted tariff pass-through.
    Validate,
    /// Aggregate pass-through and its markup/cost decomposition.
    Decompose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Heatmap => "heatmap",
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Montecarlo => "montecarlo",
            Command::Validate => "validate",
            Command::Decompose => "decompose",
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) => EXIT_CONFIG,
        Error::NoConvergence { .. } => EXIT_CONVERGENCE,
        Error::Io { .. } => EXIT_IO,
        Error::Data(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::Network(_)
        | Error::RankDeficient(_)
        | Error::UnboundedMarkup(_)
        | Error::SingularPassthrough(_)
        | Error::InfeasibleOutsideOption(_) => EXIT_DATA,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub schema_version: u32,
    pub seed: u64,
    pub config_path: Option<String>,
    /// Digest of the effective configuration below.
    pub config_sha256: String,
    pub config: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// State shared by one subcommand invocation.
pub(crate) struct Context {
    pub cfg: RunConfig,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Context {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Input path from the config, or the conventional file in the run directory.
    pub fn input(&mut self, configured: &Option<PathBuf>, default: &str) -> Result<PathBuf> {
        let p = configured.clone().unwrap_or_else(|| self.path(default));
        if !p.is_file() {
            return Err(Error::io(
                &p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            ));
        }
        self.inputs.push(p.clone());
        Ok(p)
    }

    pub fn wrote(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.outputs.push(p.clone());
        p
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.wrote(name);
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.wrote(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    fn manifest(&self, command: Command) -> Result<Manifest> {
        let config = self.cfg.to_toml();
        Ok(Manifest {
            command: command.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            config_path: self.config_path.as_ref().map(|p| p.display().to_string()),
            config_sha256: sha256_hex(config.as_bytes()),
            config,
            inputs: self.inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
        })
    }
}

/// Runs one parsed invocation and returns the paths it wrote.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let (cfg, config_path) = match &cli.config {
        Some(p) => (RunConfig::load(p)?.0, Some(p.clone())),
        None => (RunConfig::default(), None),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let cfg = RunConfig { seed: Some(seed), ..cfg };
    if cli.jobs == Some(0) {
        return Err(Error::Config("--jobs must be positive".into()));
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let mut ctx = Context {
        cfg,
        config_path,
        seed,
        out: cli.out.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Heatmap => commands::heatmap(&mut ctx),
        Command::Simulate => commands::simulate(&mut ctx),
        Command::Estimate => commands::estimate(&mut ctx),
        Command::Montecarlo => commands::montecarlo(&mut ctx),
        Command::Validate => commands::validate(&mut ctx),
        Command::Decompose => commands::decompose(&mut ctx),
    })?;
    let manifest = ctx.manifest(cli.command)?;
    let name = format!("manifest_{}.json", cli.command.name());
    let p = ctx.path(&name);
    std::fs::write(&p, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&p, e))?;
    let mut written = ctx.outputs;
    written.push(p);
    Ok(written)
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
