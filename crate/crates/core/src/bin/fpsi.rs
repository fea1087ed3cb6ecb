use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpsi::commands::{cmd_check, cmd_convergence, cmd_run, CliError};

#[derive(Parser)]
#[command(name = "fpsi", version, about = "Non-Newtonian Stokes-Biot solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write snapshots and the step trace.
    Run { config: PathBuf },
    /// Relative errors and rates of several levels against a finer reference.
    Convergence {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 40])]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 160)]
        reference: usize,
    },
    /// Monotonicity samples for the viscosity laws and the energy decay run.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("FPSI_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("FPSI_THREADS: expected a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("FPSI_THREADS must be >= 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let s = cmd_run(&config)?;
            let its: usize = s.trace.steps.iter().map(|r| r.picard_iterations).sum();
            println!("{} steps, {its} Picard iterations", s.trace.steps.len());
            for f in &s.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Convergence { config, levels, reference } => {
            let r = cmd_convergence(&config, &levels, reference)?;
            print!("{}", r.to_table());
        }
        Command::Check { seed } => {
            let outcomes = cmd_check(seed)?;
            let mut failed = Vec::new();
            for o in &outcomes {
                println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                if !o.passed {
                    failed.push(o.name.clone());
                }
            }
            if !failed.is_empty() {
                return Err(CliError::Check(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
