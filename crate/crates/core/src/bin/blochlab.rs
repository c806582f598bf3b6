use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use blochlab::runner::{emit_report, load_spec, run};

#[derive(Parser)]
#[command(version, about = "Bloch-state interference experiments on a 1D ring lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON spec (or a previous run's manifest).
    Run {
        spec: PathBuf,
        /// Output directory, overriding the spec's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed, overriding `params.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// `dotted.key=value` applied to the spec before validation.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        spec,
        out,
        seed,
        overrides,
    } = cli.command;
    let result = load_spec(&spec, out, seed, &overrides).and_then(|spec| run(&spec));
    match result {
        Ok(results) => {
            print!("{}", emit_report(&results));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
