//! `scpilot`: harmonize perturbation datasets, search modeling pipelines,
//! score predictions, and manage the knowledge base.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 validation rejection,
//! 3 LLM transport failure, 4 no valid candidate found. Failures print a
//! JSON object to standard error; standard output carries only results.

mod commands;
mod config;
mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{message}")]
    Validation { message: String, detail: Value },
    #[error("{message}")]
    Transport { message: String, detail: Value },
    #[error("no valid candidate found after {iterations} iterations")]
    NoCandidate { iterations: usize },
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn validation(message: impl Into<String>, detail: Value) -> Self {
        CliError::Validation { message: message.into(), detail }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Validation { .. } => 2,
            CliError::Transport { .. } => 3,
            CliError::NoCandidate { .. } => 4,
        }
    }

    fn to_json(&self) -> Value {
        let kind = match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Validation { .. } => "validation",
            CliError::Transport { .. } => "transport",
            CliError::NoCandidate { .. } => "no_candidate",
        };
        let mut err = json!({ "kind": kind, "message": self.to_string(), "exit_code": self.exit_code() });
        match self {
            CliError::Validation { detail, .. } | CliError::Transport { detail, .. } if !detail.is_null() => {
                err["detail"] = detail.clone();
            }
            CliError::Io { path, .. } => err["path"] = json!(path),
            _ => {}
        }
        json!({ "error": err })
    }
}

#[derive(Parser, Debug)]
#[command(name = "scpilot", version, about = "Single-cell perturbation harmonization and pipeline search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every run-producing command.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Config file of `section.key=value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config value, e.g. `--set search.n_sim=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Map a raw bundle onto the canonical schema.
    Unify(commands::UnifyArgs),
    /// Search the pipeline space against an evaluator.
    Search(commands::SearchArgs),
    /// Score per-condition predictions against a canonical bundle.
    Evaluate(commands::EvaluateArgs),
    /// Write a synthetic canonical bundle with a ground-truth sidecar.
    GenSynthetic(commands::GenSyntheticArgs),
    /// Inspect or extend a knowledge base file.
    Kb {
        #[command(subcommand)]
        action: commands::KbAction,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(std::io::stdout(), "{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    let result = match cli.command {
        Command::Unify(a) => commands::unify(a),
        Command::Search(a) => commands::search(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::GenSynthetic(a) => commands::gen_synthetic(a),
        Command::Kb { action } => commands::kb(action),
    };
    match result {
        Ok(out) => {
            // A closed stdout (e.g. piped into `head`) is not a failure of the command.
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&out).expect("output serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code())
}
