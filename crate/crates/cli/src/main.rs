mod bench;
mod train;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use qfl_core::config::Workflow;

#[derive(Parser)]
#[command(name = "qfl", version, about = "Encrypted quantum federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv and summary.json.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workflow: Option<Workflow>,
        #[arg(long)]
        clients: Option<usize>,
        /// Write the key trace of the first adder pass.
        #[arg(long)]
        trace: bool,
        /// Any config key, e.g. --set rounds=10. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Exhaustively check the adder and print the scheme comparison CSV.
    BenchAdder {
        /// Width, range (2-6) or list (2,4).
        #[arg(long = "w", default_value = "4")]
        widths: String,
        /// Build without the carry-in qubit.
        #[arg(long)]
        no_carry_in: bool,
        /// Also write comparison.csv and the adder circuits here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite.
    Verify {
        #[arg(long, value_enum)]
        suite: verify::Suite,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            workflow,
            clients,
            trace,
            set,
        } => {
            let overrides = train::Overrides {
                seed,
                out,
                workflow,
                clients,
                trace,
                set,
            };
            let cfg = train::load_config(config.as_deref(), &overrides)?;
            train::run(&cfg)?;
            Ok(true)
        }
        Command::BenchAdder {
            widths,
            no_carry_in,
            out,
        } => {
            let widths = bench::parse_widths(&widths)?;
            let outcome = bench::run(&widths, !no_carry_in, out.as_deref())?;
            print!("{}", outcome.csv);
            if !outcome.ok {
                eprintln!("{}", outcome.failure_report);
            }
            Ok(outcome.ok)
        }
        Command::Verify { suite, seed } => {
            let reports = verify::run(suite, seed)?;
            let mut ok = true;
            for r in &reports {
                println!("{}", r.summary);
                if !r.passed() {
                    ok = false;
                    eprintln!("{}", r.to_json());
                }
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
