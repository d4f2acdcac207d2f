mod analyze;
mod eval;
mod llm;
mod pdr;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use eegbg::config::PipelineConfig;
use serde_json::json;

/// Quantitative EEG background analysis with LLM-written reports.
#[derive(Parser, Debug)]
#[command(name = "eegbg", version)]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyze one EDF recording.
    Analyze(analyze::AnalyzeArgs),
    /// Analyze every EDF in a directory or list file with a worker pool.
    Batch(analyze::BatchArgs),
    /// Train PDR regression models, one file per seed plus an ensemble manifest.
    TrainPdr(pdr::TrainArgs),
    /// Cross-validate the PDR model (grouped k-fold) or score a trained one.
    EvalPdr(pdr::EvalArgs),
    /// Classification metrics, McNemar and verifier agreement.
    Eval(eval::EvalArgs),
    /// Generate a narrative report from a features JSON file.
    Report(llm::ReportArgs),
    /// Have the configured verifiers classify a report.
    Verify(llm::VerifyArgs),
    /// Write synthetic recordings or a synthetic PDR training corpus.
    #[command(subcommand)]
    Synth(synth::SynthCommand),
}

/// Problem with what the user supplied (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

pub fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn error_kind(err: &anyhow::Error) -> (&'static str, u8) {
    use eegbg::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. } => ("io", 1),
                E::EdfHeader { .. } | E::Calibration { .. } | E::TruncatedData { .. } => ("edf", 1),
                E::Annotation { .. } => ("input_format", 1),
                E::MissingChannels(_) | E::DuplicateChannel(_) => ("channels", 1),
                E::Config(_) => ("config", 1),
                E::ModelFormat(_) => ("model_format", 1),
                E::Json(_) => ("json", 1),
                E::Dimension(_) => ("dimension", 2),
                E::InvalidParameter(_) => ("invalid_parameter", 2),
                E::DegeneratePosterior => ("degenerate_posterior", 2),
                E::NonFinite(_) => ("non_finite", 2),
                E::Diverged { .. } => ("diverged", 2),
                E::Transport { .. } => ("transport", 2),
                E::ReportStructure { .. } => ("report_structure", 2),
            };
        }
        if cause.is::<InputError>() {
            return ("input", 1);
        }
        if cause.is::<std::io::Error>() {
            return ("io", 1);
        }
        if cause.is::<serde_json::Error>() {
            return ("json", 1);
        }
    }
    ("pipeline", 2)
}

/// Error chain joined with ": ", skipping causes already quoted by their parent.
pub fn error_message(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let m = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&m)) {
            parts.push(m);
        }
    }
    parts.join(": ")
}

fn run(cli: Cli) -> Result<()> {
    let cfg_path = cli.config.as_ref();
    match cli.command {
        Command::Analyze(a) => analyze::run_analyze(a, cfg_path),
        Command::Batch(a) => analyze::run_batch(a, cfg_path),
        Command::TrainPdr(a) => pdr::run_train(a, cfg_path),
        Command::EvalPdr(a) => pdr::run_eval(a, cfg_path),
        Command::Eval(a) => eval::run(a),
        Command::Report(a) => llm::run_report(a, cfg_path),
        Command::Verify(a) => llm::run_verify(a, cfg_path),
        Command::Synth(c) => synth::run(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            let msg = error_message(&e);
            eprintln!("{}", json!({ "error": { "kind": kind, "message": msg, "exit_code": code } }));
            ExitCode::from(code)
        }
    }
}
