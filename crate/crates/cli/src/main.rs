use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use expval_cli::{deuteron, exit_code, run_config, worker_count, write_outcome, CliError};

#[derive(Parser)]
#[command(name = "expval", version, about = "Expectation-value estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seeds with this single seed.
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Deuteron reference numbers.
    Deuteron {
        /// Print the reference numbers as JSON.
        #[arg(long)]
        summary: bool,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { config, seed_override, out } => {
            let outcome = run_config(&config, seed_override, worker_count()?)?;
            let path = write_outcome(&outcome, &out)?;
            for c in &outcome.summary.checks {
                println!(
                    "{} {}: measured {:.6e} in [{:.6e}, {:.6e}]",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.lower,
                    c.upper
                );
            }
            println!("summary: {}", path.display());
            Ok(exit_code(&outcome))
        }
        Command::Deuteron { summary } => {
            let (_, _, r) = deuteron::deuteron();
            if summary {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                println!("H = 87.5 - 35 X + 82.5 Z (MeV); E_gs = {:.4} MeV", r.e_gs);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
