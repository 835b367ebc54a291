use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use regpos::harness::config::Config;
use regpos::harness::{run_and_write, HarnessError};

#[derive(Parser)]
#[command(version, about = "Regular positions of convex bodies and Monte Carlo section experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration (bodies, experiment, parameters).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for JSONL and CSV files.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Stamp records with the wall-clock time.
    #[arg(long, global = true)]
    timestamps: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Property suites over the standard bodies.
    Props,
    /// ℓ-position of each body.
    Ellpos,
    /// Fixed-point regular position with certificate.
    Regpos,
    /// Random Gelfand numbers.
    Sections,
    /// Empirical low-M* constant.
    Lowmstar,
    /// Random quotient-of-subspace experiment.
    Qs,
    /// Regularity constant as a function of alpha.
    Curve,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Props => "props",
            Command::Ellpos => "ellpos",
            Command::Regpos => "regpos",
            Command::Sections => "sections",
            Command::Lowmstar => "lowmstar",
            Command::Qs => "qs",
            Command::Curve => "curve",
        }
    }
}

fn run(cli: &Cli) -> Result<bool, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let name = cli.command.name();
    if let Some(e) = &cfg.experiment {
        if e != name {
            return Err(HarnessError::Config(format!("config is for {e:?}, not {name:?}")));
        }
    }
    cfg.timestamps |= cli.timestamps;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let records = run_and_write(name, &cfg, seed, &cli.out)?;
    for r in &records {
        eprintln!(
            "{} {} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.experiment,
            r.body_name.clone().unwrap_or_else(|| r.parameters.get("suite").map(|v| v.to_string()).unwrap_or_default())
        );
    }
    Ok(records.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
