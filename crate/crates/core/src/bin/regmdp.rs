use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regmdp::runner::{describe, preset, run_experiment, ExperimentConfig};

/// Regularized tabular dynamic-programming experiments.
#[derive(Parser)]
#[command(name = "regmdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Experiment config file (JSON).
    config: Option<PathBuf>,
    /// Use a bundled preset instead of a config file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the run matrix and write artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory; overrides REGMDP_OUT_DIR and the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the run plan without executing it.
    Describe {
        #[command(flatten)]
        source: Source,
    },
    /// Parse and validate a config.
    Validate {
        #[command(flatten)]
        source: Source,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn load(source: &Source) -> Result<ExperimentConfig, String> {
    let text = match (&source.config, &source.preset) {
        (Some(path), None) => std::fs::read_to_string(path).map_err(|e| format!("{}: {}", path.display(), e))?,
        (None, Some(name)) => preset(name).map_err(|e| e.to_string())?.to_string(),
        _ => return Err("give a config file or --preset NAME".to_string()),
    };
    ExperimentConfig::from_json(&text).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let source = match &cli.command {
        Command::Run { source, .. } | Command::Describe { source } | Command::Validate { source } => source,
    };
    let config = match load(source) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("config error: {}", msg);
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match cli.command {
        Command::Validate { .. } => {
            println!("ok: {} runs x {} seeds", config.runs.len(), config.seeds.len());
            ExitCode::SUCCESS
        }
        Command::Describe { .. } => match describe(&config) {
            Ok(text) => {
                print!("{}", text);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {}", e);
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run { jobs, out, .. } => {
            let out_dir = out
                .or_else(|| std::env::var_os("REGMDP_OUT_DIR").map(PathBuf::from))
                .unwrap_or_else(|| config.outputs.directory.clone());
            match run_experiment(&config, &out_dir, jobs) {
                Ok(outcome) => {
                    println!("wrote {} files to {}", outcome.files.len(), out_dir.display());
                    for (run, seed, it) in &outcome.diverged {
                        eprintln!("diverged: run {} seed {} at iteration {}", run, seed, it);
                    }
                    if outcome.exit_code() == 0 {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_DIVERGED)
                    }
                }
                Err(e @ regmdp::Error::Config(_)) => {
                    eprintln!("config error: {}", e);
                    ExitCode::from(EXIT_CONFIG)
                }
                Err(e) => {
                    eprintln!("error: {}", e);
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
