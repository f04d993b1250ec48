use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use soap_tails::experiment::{exit_code, Command, Context, ExperimentSpec, Overrides};

#[derive(Parser)]
#[command(name = "soap-tails", version, about = "M/G/1 SOAP scheduling: rank functions, tail analysis, simulation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment config (TOML sections: distribution, system, policies, grid, sim, output).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulated arrivals across all replications.
    #[arg(long, global = true)]
    jobs: Option<u64>,
    #[arg(long, global = true)]
    reps: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Rank tables and worst ages.
    Rank,
    /// Light-tail decay rates and verdicts.
    AnalyzeLight,
    /// Heavy-tail exponent fits and diagnostics.
    AnalyzeHeavy,
    /// Simulate each policy on paired streams.
    Simulate,
    /// Tail class, residual-life class and Gittins verdict.
    Classify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Rank => Command::Rank,
        Cmd::AnalyzeLight => Command::AnalyzeLight,
        Cmd::AnalyzeHeavy => Command::AnalyzeHeavy,
        Cmd::Simulate => Command::Simulate,
        Cmd::Classify => Command::Classify,
    };
    let (spec, base) = match &cli.config {
        Some(path) => match ExperimentSpec::load(path) {
            Ok(s) => (s, path.parent().map(PathBuf::from).unwrap_or_default()),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit_code(&e) as u8);
            }
        },
        None => (ExperimentSpec::default(), PathBuf::from(".")),
    };
    let ov = Overrides {
        out: cli.out,
        seed: cli.seed,
        jobs: cli.jobs,
        reps: cli.reps,
    };
    match Context::new(command, spec, base, &ov).run() {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
