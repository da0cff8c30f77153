use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qvarlab::experiment::{run_from_path, Command, OutputFormat, Overrides};

/// Quadratic-variation experiments for tri-fBm and n-fBm.
#[derive(Parser)]
#[command(name = "qvarlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum Sub {
    /// Covariance and structure function on a time grid.
    CovTable(Common),
    /// Exact and simulated moments of S_n^alpha with trend classification.
    QvSweep(Common),
    /// Check the tri-fBm increment covariance bounds (exit 3 on violations).
    BoundsVerify(Common),
    /// Double sequence a_{m,n} with its product bound.
    AmnTable(Common),
    /// Self-similarity index estimates (tri-fBm, HK <= 1/2).
    Estimate(Common),
    /// Exact or quadrature-based sample paths.
    Simulate(Common),
    /// Large-t behavior of psi(t-1, t) for n-fBm.
    Asymptotics(Common),
    /// Exact mean and variance of S_n^alpha.
    Moments(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::CovTable(c) => (Command::CovTable, c),
        Sub::QvSweep(c) => (Command::QvSweep, c),
        Sub::BoundsVerify(c) => (Command::BoundsVerify, c),
        Sub::AmnTable(c) => (Command::AmnTable, c),
        Sub::Estimate(c) => (Command::Estimate, c),
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::Asymptotics(c) => (Command::Asymptotics, c),
        Sub::Moments(c) => (Command::Moments, c),
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out,
        format: common.format,
    };
    match run_from_path(command, &common.config, &overrides) {
        Ok(outcome) => {
            let m = &outcome.manifest;
            for f in &m.files {
                eprintln!("wrote {}", outcome.dir.join(&f.path).display());
            }
            if m.violations > 0 {
                eprintln!("{}: {} violation(s) found", m.command, m.violations);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("qvarlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
