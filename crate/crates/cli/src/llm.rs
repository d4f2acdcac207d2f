use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use eegbg::config::LlmConfig;
use eegbg::fsutil::write_atomic;
use eegbg::report::client::{client_from_config, LlmClient, RetryPolicy};
use eegbg::report::verify::verify_report;
use eegbg::report::{generate_report, ReportFeatures};

use crate::InputError;

/// Language-model clients built from the `[llm]` config section.
pub struct Clients {
    pub generator: Box<dyn LlmClient>,
    pub verifiers: Vec<Box<dyn LlmClient>>,
    pub policy: RetryPolicy,
}

impl Clients {
    pub fn from_config(llm: &LlmConfig) -> Result<Self> {
        let gen_cfg = llm.generator.as_ref().ok_or_else(|| {
            InputError("no [llm.generator] configured; pass --no-llm to stop after the feature JSON".into())
        })?;
        let generator = client_from_config(gen_cfg)?;
        let verifiers = llm.verifiers.iter().map(client_from_config).collect::<eegbg::Result<Vec<_>>>()?;
        if !verifiers.is_empty() && verifiers.len() != 3 {
            return Err(InputError(format!("configure exactly 3 verifiers (found {})", verifiers.len())).into());
        }
        Ok(Clients { generator, verifiers, policy: llm.retry_policy() })
    }

    pub fn verifier_refs(&self) -> Vec<&dyn LlmClient> {
        self.verifiers.iter().map(|b| b.as_ref()).collect()
    }
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// `<id>.features.json` written by `analyze`.
    pub features: PathBuf,
    /// Output path (default: `<id>.report.txt` beside the features file).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Report text to classify.
    pub report: PathBuf,
    /// Output path (default: `<id>.verify.json` beside the report).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub overwrite: bool,
}

/// `dir/x.features.json` with suffix `.report.txt` → `dir/x.report.txt`.
fn sibling(path: &Path, strip: &str, add: &str) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(strip).unwrap_or_else(|| name.split('.').next().unwrap_or(&name));
    path.with_file_name(format!("{stem}{add}"))
}

fn check_free(path: &Path, overwrite: bool) -> Result<()> {
    if !overwrite && path.exists() {
        return Err(InputError(format!("{} already exists; pass --overwrite to replace it", path.display())).into());
    }
    Ok(())
}

pub fn run_report(args: ReportArgs, cfg_path: Option<&PathBuf>) -> Result<()> {
    let cfg = crate::load_config(cfg_path)?;
    let out = args.out.clone().unwrap_or_else(|| sibling(&args.features, ".features.json", ".report.txt"));
    check_free(&out, args.overwrite)?;
    let text = fs::read_to_string(&args.features).with_context(|| format!("reading {}", args.features.display()))?;
    let rf = ReportFeatures::from_json(&text)?;
    let clients = Clients::from_config(&cfg.llm)?;
    let report = generate_report(clients.generator.as_ref(), &rf, &cfg.llm.params(), &clients.policy)?;
    write_atomic(&out, report.text.as_bytes())?;
    println!("{}", serde_json::to_string_pretty(&report.provenance)?);
    Ok(())
}

pub fn run_verify(args: VerifyArgs, cfg_path: Option<&PathBuf>) -> Result<()> {
    let cfg = crate::load_config(cfg_path)?;
    let out = args.out.clone().unwrap_or_else(|| sibling(&args.report, ".report.txt", ".verify.json"));
    check_free(&out, args.overwrite)?;
    let text = fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let clients = Clients::from_config(&cfg.llm)?;
    if clients.verifiers.is_empty() {
        return Err(InputError("no [[llm.verifiers]] configured".into()).into());
    }
    let result = verify_report(
        &text,
        &clients.verifier_refs(),
        &cfg.llm.params(),
        &clients.policy,
        cfg.llm.max_in_flight.max(1),
    )?;
    let json = serde_json::to_string_pretty(&result)?;
    write_atomic(&out, format!("{json}\n").as_bytes())?;
    println!("{json}");
    Ok(())
}
