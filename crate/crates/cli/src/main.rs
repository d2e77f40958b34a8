mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;

/// Dynamical Component Analysis and windowed eigenvalue detection.
#[derive(Debug, Parser)]
#[command(name = "dyca", version)]
struct Cli {
    /// TOML file with any of the tuning keys below (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic recording (CSV) and its annotations (JSON).
    Synth(commands::SynthArgs),
    /// Fit DyCA to a recording or a time range of it; writes model JSON.
    Fit(commands::FitArgs),
    /// Project a recording onto DyCA, PCA or ICA components.
    Project(commands::ProjectArgs),
    /// Per-window eigenvalues and decisions as CSV.
    Detect(commands::DetectArgs),
    /// Threshold sweep over several annotated recordings.
    Sweep(commands::SweepArgs),
    /// Fit PCA and ICA baselines; with ground-truth sources, compare
    /// trajectory angles against DyCA.
    Baselines(commands::BaselinesArgs),
    /// Full DyCA spectrum on sliding windows for eigenvalue plots.
    Eigplot(commands::EigplotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Input,
    Numerical,
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// File or key that caused the failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
}

impl CliError {
    pub fn input(message: impl Into<String>, path: &Path) -> Self {
        Self {
            kind: ErrorKind::Input,
            message: message.into(),
            input: Some(path.display().to_string()),
        }
    }

    pub fn input_key(message: impl Into<String>, key: &str) -> Self {
        Self {
            kind: ErrorKind::Input,
            message: message.into(),
            input: Some(key.to_string()),
        }
    }

    /// Wraps a library error, classifying it as input or numerical.
    pub fn from_lib(e: impl Into<dyca::Error>, input: Option<&Path>) -> Self {
        let e = e.into();
        Self {
            kind: if e.is_numerical() {
                ErrorKind::Numerical
            } else {
                ErrorKind::Input
            },
            message: e.to_string(),
            input: input.map(|p| p.display().to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Input => 1,
            ErrorKind::Numerical => 2,
        }
    }
}

fn report(e: &CliError) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::to_string(&serde_json::json!({ "error": e })).expect("serializable")
    );
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(
                e.kind(),
                K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let message = rendered
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            return report(&CliError {
                kind: ErrorKind::Input,
                message: message.to_string(),
                input: e.get(clap::error::ContextKind::InvalidArg).map(|v| v.to_string()),
            });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = cli.params.over(file);
    match cli.command {
        Command::Synth(a) => commands::synth(&a, &cfg),
        Command::Fit(a) => commands::fit(&a, &cfg),
        Command::Project(a) => commands::project(&a, &cfg),
        Command::Detect(a) => commands::detect(&a, &cfg),
        Command::Sweep(a) => commands::sweep(&a, &cfg),
        Command::Baselines(a) => commands::baselines(&a, &cfg),
        Command::Eigplot(a) => commands::eigplot(&a, &cfg),
    }
}
