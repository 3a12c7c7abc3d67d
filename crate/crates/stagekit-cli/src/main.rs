use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stagekit_cli::commands;
use stagekit_cli::config::load_config;
use stagekit_cli::CliError;

/// Reverse-engineers ML pipeline structure from notebooks: taxonomy algebra,
/// instruction extraction, stage classification, and workflow insights.
#[derive(Parser)]
#[command(name = "stagekit", version, about, max_term_width = 100)]
struct Cli {
    /// Run configuration file; relative paths inside it resolve against
    /// its own directory.
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Write artifacts here instead of the config's output_dir.
    #[arg(short, long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge two stage taxonomies along a cross-mapping.
    Unify,
    /// Apply headword synonym replacements to a unified taxonomy.
    Mutate,
    /// Label every instruction in a notebook corpus.
    Classify {
        /// Worker threads for classification (overrides the config).
        #[arg(short, long)]
        parallelism: Option<usize>,
    },
    /// Score predictions against labeled cells.
    Evaluate,
    /// Extract stage frequencies, transitions, and patterns.
    Insights,
    /// Collate evaluation and insight artifacts into one document.
    Report,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let loaded = load_config(config_path)?;
    let out = cli.output_dir.as_deref();
    match &cli.command {
        Command::Unify => commands::cmd_unify(&loaded, out),
        Command::Mutate => commands::cmd_mutate(&loaded, out),
        Command::Classify { parallelism } => commands::cmd_classify(&loaded, out, *parallelism),
        Command::Evaluate => commands::cmd_evaluate(&loaded, out),
        Command::Insights => commands::cmd_insights(&loaded, out),
        Command::Report => commands::cmd_report(&loaded, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
