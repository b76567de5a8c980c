//! `rac` — retrieval-augmented classification runs from one config file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rac_cli::commands::{
    cmd_benchmark, cmd_eval, cmd_index, cmd_label, cmd_schemagen, CliError,
};
use rac_cli::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "rac",
    version,
    about = "Zero-shot text labeling: rank categories by embedding similarity, \
             then ask a model a binary membership question per candidate."
)]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the run seed from the config file.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Verbose diagnostics on stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Embed every category and write the retrieval index.
    Index,
    /// Label the dataset; writes predictions and a cost ledger.
    Label,
    /// Score a prediction file against gold labels.
    Eval,
    /// Generate category names and descriptions from grouped examples.
    Schemagen,
    /// Binary membership accuracy on balanced per-class pairs.
    Benchmark,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config_path = cli.config.as_deref().ok_or_else(|| {
        CliError::Setup("--config <FILE> is required".to_owned())
    })?;
    let config = RunConfig::load(config_path)?;
    match cli.command {
        Command::Index => cmd_index(&config),
        Command::Label => cmd_label(&config, cli.seed),
        Command::Eval => cmd_eval(&config),
        Command::Schemagen => cmd_schemagen(&config, cli.seed),
        Command::Benchmark => cmd_benchmark(&config, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(
        env_logger::Env::default()
            .default_filter_or(if cli.verbose { "debug" } else { "info" }),
    )
    .format_timestamp(None)
    .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
