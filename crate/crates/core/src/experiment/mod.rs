//! The `qvarlab` experiment runner: configuration, command dispatch and
//! persistence.
//!
//! A run validates its configuration, computes every table in memory,
//! writes the tables atomically and finally writes `manifest.json`, which
//! lists each output file with its SHA-256 digest. A directory without a
//! manifest holds an incomplete run.

pub mod commands;
pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::Error;

pub use config::{ExperimentConfig, OutputFormat};
pub use output::{RunManifest, Table, Value, MANIFEST_NAME};

use output::{sha256_hex, write_atomic, FileEntry, StageTiming};

pub const THREADS_ENV: &str = "QVARLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    CovTable,
    QvSweep,
    BoundsVerify,
    AmnTable,
    Estimate,
    Simulate,
    Asymptotics,
    Moments,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::CovTable,
        Command::QvSweep,
        Command::BoundsVerify,
        Command::AmnTable,
        Command::Estimate,
        Command::Simulate,
        Command::Asymptotics,
        Command::Moments,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::CovTable => "cov-table",
            Command::QvSweep => "qv-sweep",
            Command::BoundsVerify => "bounds-verify",
            Command::AmnTable => "amn-table",
            Command::Estimate => "estimate",
            Command::Simulate => "simulate",
            Command::Asymptotics => "asymptotics",
            Command::Moments => "moments",
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Internal(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Internal(_) => 1,
        }
    }

    fn from_module(command: Command, e: Error) -> Self {
        let msg = format!("{}: {e}", command.as_str());
        match e {
            Error::InvalidParameter(_)
            | Error::NegativeTime { .. }
            | Error::IndexOutOfRange(_)
            | Error::GuardExceeded { .. }
            | Error::Unsupported(_) => RunError::Config(msg),
            _ => RunError::Internal(msg),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    /// 0 on success, 3 when an assertion-bearing command found violations.
    pub fn exit_code(&self) -> i32 {
        if self.manifest.violations > 0 {
            3
        } else {
            0
        }
    }
}

/// Parses `QVARLAB_THREADS`; `0` or unset means automatic.
pub fn threads_from_env() -> Result<usize, RunError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| RunError::Config(format!("{THREADS_ENV} must be a nonnegative integer (got {v:?})"))),
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn io_err(path: &Path, e: std::io::Error) -> RunError {
    RunError::Internal(format!("{}: {e}", path.display()))
}

/// Runs `command` on the current rayon pool.
pub fn run(command: Command, mut cfg: ExperimentConfig, overrides: &Overrides) -> Result<RunOutcome, RunError> {
    overrides.apply(&mut cfg);
    cfg.validate(command).map_err(RunError::Config)?;
    let dir = cfg.output_dir.clone().expect("validated");
    let started_at = now();

    let result = match command {
        Command::CovTable => commands::cov_table(&cfg),
        Command::QvSweep => commands::qv_sweep(&cfg),
        Command::BoundsVerify => commands::bounds_verify(&cfg),
        Command::AmnTable => commands::amn_table(&cfg),
        Command::Estimate => commands::estimate(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Asymptotics => commands::asymptotics(&cfg),
        Command::Moments => commands::moments(&cfg),
    };
    let mut output = result.map_err(|e| RunError::from_module(command, e))?;

    let write_start = Instant::now();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let manifest_path = dir.join(MANIFEST_NAME);
    match fs::remove_file(&manifest_path) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(&manifest_path, e)),
    }

    let mut files = Vec::new();
    let mut emit = |name: String, bytes: Vec<u8>| -> Result<(), RunError> {
        let path = dir.join(&name);
        write_atomic(&path, &bytes).map_err(|e| io_err(&path, e))?;
        files.push(FileEntry {
            path: name,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    };
    for table in &output.tables {
        let name = format!("{}.{}", table.name, cfg.format.extension());
        emit(name, table.render(cfg.format).into_bytes())?;
    }
    if let Some(ensemble) = &output.ensemble {
        let body = match cfg.format {
            OutputFormat::Csv => {
                let mut buf = Vec::new();
                ensemble
                    .write_csv(&mut buf)
                    .map_err(|e| RunError::Internal(e.to_string()))?;
                buf
            }
            OutputFormat::Json => {
                let rows: Vec<&[f64]> = ensemble.paths().collect();
                let mut s = serde_json::to_string(&serde_json::json!({ "paths": rows }))
                    .map_err(|e| RunError::Internal(e.to_string()))?;
                s.push('\n');
                s.into_bytes()
            }
        };
        emit(format!("paths.{}", cfg.format.extension()), body)?;
        let sidecar = serde_json::to_string_pretty(&ensemble.sidecar(&started_at))
            .map_err(|e| RunError::Internal(e.to_string()))?;
        emit("paths.meta.json".to_string(), sidecar.into_bytes())?;
    }
    output.stages.push(StageTiming {
        name: "write".into(),
        seconds: write_start.elapsed().as_secs_f64(),
    });

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.as_str().to_string(),
        config: cfg,
        threads: rayon::current_num_threads(),
        started_at,
        finished_at: now(),
        stages: output.stages,
        jitter: output.jitter,
        violations: output.violations,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Internal(e.to_string()))?;
    write_atomic(&manifest_path, text.as_bytes()).map_err(|e| io_err(&manifest_path, e))?;
    Ok(RunOutcome { dir, manifest })
}

/// Loads the config, sizes the worker pool from `QVARLAB_THREADS` and runs.
pub fn run_from_path(command: Command, config: &Path, overrides: &Overrides) -> Result<RunOutcome, RunError> {
    let cfg = ExperimentConfig::load(config).map_err(RunError::Config)?;
    let threads = threads_from_env()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Internal(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run(command, cfg, overrides))
}
