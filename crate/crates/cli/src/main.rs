use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coalition_cli::{run_pipeline, run_stage, CliError, RunConfig, Stage};
use coalition_core::formation::Provenance;

#[derive(Parser, Debug)]
#[command(author, version, about = "Prosumer coalition formation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated algorithms: greedy, random, correlated.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_algo)]
    algo: Option<Vec<Provenance>>,

    /// Run a single stage instead of the whole pipeline.
    #[arg(long, value_parser = parse_stage)]
    stage: Option<Stage>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Every stage in order.
    Run,
    /// Weather, agent configurations and production traces.
    Simulate,
    /// Correlation matrix, decorrelation graph, ε* and the calibrated policy.
    Graph,
    /// Coalition structures.
    Form,
    /// Contract values and utilities of the formed coalitions.
    Evaluate,
    /// Failure sweeps.
    Resilience,
    /// Summary of all stages.
    Report,
}

fn parse_algo(s: &str) -> Result<Provenance, String> {
    s.parse().map_err(|e: coalition_core::Error| e.to_string())
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn execute(cli: &Cli) -> Result<usize, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    let algos = cli.algo.as_deref();
    let stage = match cli.command {
        Some(Command::Run) | None => cli.stage,
        Some(Command::Simulate) => Some(Stage::Simulate),
        Some(Command::Graph) => Some(Stage::Graph),
        Some(Command::Form) => Some(Stage::Form),
        Some(Command::Evaluate) => Some(Stage::Evaluate),
        Some(Command::Resilience) => Some(Stage::Resilience),
        Some(Command::Report) => Some(Stage::Report),
    };
    let written = match stage {
        Some(stage) => run_stage(&config, stage, algos)?,
        None => run_pipeline(&config, algos)?,
    };
    for path in &written {
        println!("{}", path.display());
    }
    Ok(written.len())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
