use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use eegbg::config::PipelineConfig;
use eegbg::fsutil::write_atomic;
use eegbg::ingest::{load_annotations, load_recording};
use eegbg::par;
use eegbg::pdr::PdrEnsemble;
use eegbg::pipeline::{analyze, psd_csv, report_stage, Analysis, PdrSource, ReportOutcome};
use eegbg::report::verify::{batch_agreement, VerificationResult};
use eegbg::report::{bounded_map, persist, timestamp, Provenance};
use log::info;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::llm::Clients;
use crate::InputError;

#[derive(Args, Debug, Clone)]
pub struct RunOpts {
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Stop after the feature JSON; no language model is contacted.
    #[arg(long)]
    pub no_llm: bool,
    /// Skip artifact repair; contaminated epoch-channels are only excluded.
    #[arg(long)]
    pub no_repair: bool,
    /// Keep only the first N seconds of each recording.
    #[arg(long)]
    pub crop_seconds: Option<f64>,
    /// PDR ensemble (model file or ensemble manifest).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Also write the averaged PSD as `<id>.psd.csv`.
    #[arg(long)]
    pub export_psd: bool,
    /// Also write the artifact mask as `<id>.artifacts.csv`.
    #[arg(long)]
    pub export_mask: bool,
    /// Replace existing outputs instead of failing.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// EDF/EDF+ recording.
    pub edf: PathBuf,
    /// `onset<TAB>label` annotation file; `<edf stem>.tsv` is used if present.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Recording id used in output names (default: file stem).
    #[arg(long)]
    pub id: Option<String>,
    #[command(flatten)]
    pub opts: RunOpts,
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    /// Directory of `.edf` files, or a text file listing one path per line.
    pub input: PathBuf,
    /// Recordings processed at once (overrides `batch_workers`).
    #[arg(long, short)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub opts: RunOpts,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
pub struct InputHash {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

pub fn hash_inputs(items: &[(&str, &Path)]) -> Result<Vec<InputHash>> {
    items
        .iter()
        .map(|(role, p)| {
            Ok(InputHash { role: role.to_string(), path: p.display().to_string(), sha256: sha256_file(p)? })
        })
        .collect()
}

#[derive(Serialize)]
struct EpochSummary {
    total: usize,
    included: usize,
    excluded: BTreeMap<String, usize>,
    artifact_entries: usize,
}

#[derive(Serialize)]
struct RunProvenance<'a> {
    tool: &'static str,
    version: &'static str,
    recording_id: &'a str,
    timestamp: String,
    inputs: Vec<InputHash>,
    config: &'a PipelineConfig,
    pdr_source: PdrSource,
    epochs: EpochSummary,
    bad_channels: &'a [String],
    warnings: &'a [String],
    report: Option<&'a Provenance>,
}

/// Applies command-line overrides to the loaded configuration.
pub fn effective_config(mut cfg: PipelineConfig, opts: &RunOpts) -> Result<PipelineConfig> {
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    if opts.no_repair {
        cfg.repair = false;
    }
    if let Some(c) = opts.crop_seconds {
        cfg.crop_seconds = Some(c);
    }
    if let Some(m) = &opts.model {
        cfg.pdr.model = Some(m.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Job<'a> {
    cfg: &'a PipelineConfig,
    cfg_path: Option<&'a PathBuf>,
    model: Option<&'a PdrEnsemble>,
    clients: Option<&'a Clients>,
    opts: &'a RunOpts,
}

struct Done {
    id: String,
    files: Vec<PathBuf>,
    analysis: Analysis,
    outcome: Option<ReportOutcome>,
}

fn sidecar(edf: &Path) -> Option<PathBuf> {
    let p = edf.with_extension("tsv");
    p.exists().then_some(p)
}

fn analyze_one(job: &Job, edf: &Path, annotations: Option<&Path>, id: &str) -> Result<Done> {
    let dir = &job.cfg.output_dir;
    let mut extra: Vec<PathBuf> = vec![dir.join(format!("{id}.provenance.json"))];
    if job.opts.export_psd {
        extra.push(dir.join(format!("{id}.psd.csv")));
    }
    if job.opts.export_mask {
        extra.push(dir.join(format!("{id}.artifacts.csv")));
    }
    if !job.opts.overwrite {
        let mut all = extra.clone();
        all.push(dir.join(format!("{id}.features.json")));
        if let Some(p) = all.iter().find(|p| p.exists()) {
            return Err(InputError(format!("{} already exists; pass --overwrite to replace it", p.display())).into());
        }
    }

    let mut rec = load_recording(edf)?;
    let ann_path = annotations.map(Path::to_path_buf).or_else(|| sidecar(edf));
    if let Some(p) = &ann_path {
        rec.annotations = load_annotations(p)?;
    }
    let analysis = analyze(&rec, job.cfg, job.model)?;
    info!("{id}: {} findings", analysis.report_features.abnormal_findings.len());

    let outcome = match job.clients {
        Some(c) => Some(report_stage(
            &analysis.report_features,
            c.generator.as_ref(),
            &c.verifier_refs(),
            &job.cfg.llm,
            &c.policy,
        )?),
        None => None,
    };

    let mut files = persist(
        dir,
        id,
        &analysis.report_features,
        outcome.as_ref().map(|o| &o.report),
        outcome.as_ref().and_then(|o| o.verification.as_ref()),
        job.opts.overwrite,
    )?;

    let mut inputs: Vec<(&str, &Path)> = vec![("recording", edf)];
    if let Some(p) = &ann_path {
        inputs.push(("annotations", p));
    }
    if let Some(p) = job.cfg_path {
        inputs.push(("config", p));
    }
    if let Some(p) = &job.cfg.pdr.model {
        inputs.push(("pdr_model", p));
    }
    if let Some(p) = &job.cfg.reference.transfer_matrix {
        inputs.push(("transfer_matrix", p));
    }
    let mut excluded = BTreeMap::new();
    for r in analysis.selection.reasons.iter().flatten() {
        let key = serde_json::to_value(r)?.as_str().unwrap_or_default().to_string();
        *excluded.entry(key).or_insert(0) += 1;
    }
    let prov = RunProvenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        recording_id: id,
        timestamp: timestamp(),
        inputs: hash_inputs(&inputs)?,
        config: job.cfg,
        pdr_source: analysis.pdr_source,
        epochs: EpochSummary {
            total: analysis.features.total_epochs,
            included: analysis.features.included_epochs,
            excluded,
            artifact_entries: analysis.artifacts.n_flagged(),
        },
        bad_channels: &analysis.features.bad_channels,
        warnings: &analysis.warnings,
        report: outcome.as_ref().map(|o| &o.report.provenance),
    };
    let mut bytes = serde_json::to_vec_pretty(&prov)?;
    bytes.push(b'\n');
    write_atomic(&extra[0], &bytes)?;
    let mut k = 1;
    if job.opts.export_psd {
        write_atomic(&extra[k], psd_csv(&analysis.psd).as_bytes())?;
        k += 1;
    }
    if job.opts.export_mask {
        write_atomic(&extra[k], analysis.artifacts.to_csv().as_bytes())?;
    }
    files.extend(extra);
    Ok(Done { id: id.to_string(), files, analysis, outcome })
}

fn recording_id(edf: &Path) -> Result<String> {
    edf.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| InputError(format!("cannot derive an id from {}", edf.display())).into())
}

fn setup(
    opts: &RunOpts,
    cfg_path: Option<&PathBuf>,
) -> Result<(PipelineConfig, Option<PdrEnsemble>, Option<Clients>)> {
    let cfg = effective_config(crate::load_config(cfg_path)?, opts)?;
    let model = match &cfg.pdr.model {
        Some(p) => Some(crate::pdr::load_model(p)?),
        None => None,
    };
    let clients = if opts.no_llm { None } else { Some(Clients::from_config(&cfg.llm)?) };
    Ok((cfg, model, clients))
}

fn summary(d: &Done) -> serde_json::Value {
    json!({
        "id": d.id,
        "outputs": d.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "abnormalFindings": d.analysis.report_features.abnormal_findings,
        "majority": d.outcome.as_ref().and_then(|o| o.verification.as_ref()).map(|v| v.majority),
    })
}

pub fn run_analyze(args: AnalyzeArgs, cfg_path: Option<&PathBuf>) -> Result<()> {
    let (cfg, model, clients) = setup(&args.opts, cfg_path)?;
    let id = match &args.id {
        Some(i) => i.clone(),
        None => recording_id(&args.edf)?,
    };
    let job = Job { cfg: &cfg, cfg_path, model: model.as_ref(), clients: clients.as_ref(), opts: &args.opts };
    let done = analyze_one(&job, &args.edf, args.annotations.as_deref(), &id)?;
    println!("{}", serde_json::to_string_pretty(&summary(&done))?);
    Ok(())
}

fn batch_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(input)
            .with_context(|| format!("listing {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("edf")))
            .collect();
        v.sort();
        return Ok(v);
    }
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let base = input.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect())
}

pub fn run_batch(args: BatchArgs, cfg_path: Option<&PathBuf>) -> Result<()> {
    let (cfg, model, clients) = setup(&args.opts, cfg_path)?;
    let inputs = batch_inputs(&args.input)?;
    if inputs.is_empty() {
        return Err(InputError(format!("no recordings found in {}", args.input.display())).into());
    }
    let ids = inputs.iter().map(|p| recording_id(p)).collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = ids.iter().find(|i| !seen.insert(i.as_str())) {
        return Err(InputError(format!("two recordings share the id `{dup}`")).into());
    }
    let workers = args.workers.unwrap_or(cfg.batch_workers).max(1);
    let job = Job { cfg: &cfg, cfg_path, model: model.as_ref(), clients: clients.as_ref(), opts: &args.opts };
    let items: Vec<(&PathBuf, &String)> = inputs.iter().zip(&ids).collect();
    // each recording runs sequentially inside its worker
    let results = bounded_map(&items, workers, |(p, id)| par::sequential(|| analyze_one(&job, p, None, id)));

    let mut rows = Vec::new();
    let mut verifications: Vec<VerificationResult> = Vec::new();
    let mut failed = 0;
    for ((p, id), r) in items.iter().zip(&results) {
        match r {
            Ok(d) => {
                if let Some(v) = d.outcome.as_ref().and_then(|o| o.verification.clone()) {
                    verifications.push(v);
                }
                rows.push(json!({ "id": id, "input": p.display().to_string(), "status": "ok", "summary": summary(d) }));
            }
            Err(e) => {
                failed += 1;
                let (kind, code) = crate::error_kind(e);
                rows.push(json!({
                    "id": id,
                    "input": p.display().to_string(),
                    "status": "error",
                    "error": { "kind": kind, "message": crate::error_message(e), "exit_code": code },
                }));
            }
        }
    }
    let agreement = (!verifications.is_empty()).then(|| batch_agreement(&verifications));
    let out = json!({
        "recordings": rows,
        "succeeded": items.len() - failed,
        "failed": failed,
        "verifier_agreement": agreement,
    });
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let path = cfg.output_dir.join("batch_summary.json");
    let mut bytes = serde_json::to_vec_pretty(&out)?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    if failed > 0 {
        bail!("{failed} of {} recordings failed; see {}", items.len(), path.display());
    }
    Ok(())
}
