use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mesugaki_cli::{run_scenario, write_outcome, CliError, Command, Overrides, ScenarioConfig, THREADS_ENV};

#[derive(Parser)]
#[command(name = "mesugaki", version, about = "Simulate and check jump-process scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate paths; writes paths.csv, events.csv and summary.json
    Simulate(RunArgs),
    /// Coupled-level and truncation diagnostics; writes convergence.json
    Converge(RunArgs),
    /// Itô formula residuals; writes ito.json
    ItoCheck(RunArgs),
    /// Martingale, time-change and mean tests; writes diagnostics.json
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.directory`
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

fn execute(command: Command, args: &RunArgs) -> Result<bool, CliError> {
    let mut config = ScenarioConfig::from_file(&args.config)?;
    let overrides = Overrides {
        seed: args.seed,
        paths: args.paths,
        out: args.out.clone(),
    };
    overrides.apply(&mut config)?;
    let outcome = run_scenario(command, &config, args.threads)?;
    write_outcome(&outcome, Path::new(&config.output.directory))?;
    println!("{}", outcome.headline);
    if !outcome.pass {
        eprintln!("{}: check failed", command.name());
    }
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Converge(a) => (Command::Converge, a),
        Cmd::ItoCheck(a) => (Command::ItoCheck, a),
        Cmd::Validate(a) => (Command::Validate, a),
    };
    match execute(command, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
