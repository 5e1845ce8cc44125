//! Scenario runner behind the `mesugaki` binary.
//!
//! A scenario is a TOML file (see [`config`]). [`run_scenario`] builds it,
//! runs one of the four commands on a worker pool of the requested size
//! and returns the output files in memory. Paths are gathered in index
//! order, so the bytes do not depend on the number of threads.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod scenario;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{Command, Outcome};
pub use config::{ConfigError, ScenarioConfig, DEFAULT_SEED};

/// Environment variable for the worker count when `--threads` is absent.
pub const THREADS_ENV: &str = "MESUGAKI_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] mesugaki::Error),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for usage and configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Simulation(_) | CliError::Io { .. } => 1,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ScenarioConfig) -> Result<(), ConfigError> {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(paths) = self.paths {
            config.paths = paths;
        }
        if let Some(out) = &self.out {
            config.output.directory = out.to_string_lossy().into_owned();
        }
        config.check()
    }
}

/// Runs `command` on a pool of `threads` workers, or on the global pool.
pub fn run_scenario(command: Command, config: &ScenarioConfig, threads: Option<usize>) -> Result<Outcome, CliError> {
    match threads {
        None => commands::run(command, config),
        Some(0) => Err(CliError::Usage("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?
            .install(|| commands::run(command, config)),
    }
}

/// Writes every file of `outcome` into `dir`, creating it if needed.
pub fn write_outcome(outcome: &Outcome, dir: &Path) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for f in &outcome.files {
        let path = dir.join(&f.name);
        std::fs::write(&path, &f.bytes).map_err(io(&path))?;
    }
    Ok(())
}
