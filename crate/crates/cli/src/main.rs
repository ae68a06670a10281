use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(author, version, about = "Classify, solve, sweep and verify radial p-Laplace systems")]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (solve, sweep).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict the boundary class from the integral criteria.
    Classify,
    /// Integrate the radial system and write trajectory.csv and report.json.
    Solve,
    /// Evaluate the sweep grid and write an atlas CSV.
    Sweep {
        /// Also solve every row.
        #[arg(long)]
        solve: bool,
    },
    /// Run the inequality checks; exits 1 if any fails.
    Verify {
        /// Check this trajectory CSV instead of solving.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let Some(path) = args.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(plap::EXIT_CONFIG as u8);
    };
    let mut cfg = match plap::load_config(&path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(plap::EXIT_CONFIG as u8);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut stdout = std::io::stdout().lock();
    let result = match args.command {
        Command::Classify => plap::cmd_classify(&cfg, &mut stdout),
        Command::Solve => plap::cmd_solve(&cfg, args.out.as_deref().unwrap_or(std::path::Path::new("."))),
        Command::Sweep { solve } => plap::cmd_sweep(&cfg, solve, args.out.as_deref(), &mut stdout),
        Command::Verify { trajectory } => plap::cmd_verify(&cfg, trajectory.as_deref(), &mut stdout),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
