use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use eegbg::fsutil::write_atomic;
use eegbg::par;
use eegbg::pdr::io::{load_dataset, load_ensemble, save_ensemble};
use eegbg::pdr::{
    kfold_grouped, pdr_metrics, spectral_peak_baseline, split_grouped, train, train_ensemble, LabeledExample,
    PdrEnsemble, PdrFeatureMap, PdrMetrics, TrainConfig,
};
use log::info;
use serde::{Deserialize, Serialize};

use crate::InputError;

pub const ENSEMBLE_MANIFEST: &str = "ensemble.json";

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleManifest {
    /// Model files relative to the manifest.
    members: Vec<ManifestMember>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestMember {
    seed: u64,
    file: String,
}

/// Loads a model file, or every member listed in an ensemble manifest.
pub fn load_model(path: &Path) -> Result<PdrEnsemble> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: EnsembleManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if m.members.is_empty() {
            return Err(InputError(format!("{} lists no members", path.display())).into());
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let mut members = Vec::new();
        for mm in &m.members {
            members.extend(load_ensemble(&base.join(&mm.file))?.members);
        }
        return Ok(PdrEnsemble { members });
    }
    Ok(load_ensemble(path)?)
}

#[derive(Args, Debug, Clone)]
pub struct TrainOpts {
    /// Epochs per model (overrides the config).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size (overrides the config).
    #[arg(long)]
    pub batch: Option<usize>,
    /// Members per ensemble (overrides the config).
    #[arg(long)]
    pub members: Option<usize>,
}

impl TrainOpts {
    fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch {
            cfg.batch = b;
        }
        if let Some(m) = self.members {
            cfg.members = m;
        }
        cfg
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// `file_id,side,label_hz,feature_path` manifest.
    pub manifest: PathBuf,
    /// Directory for model files, the ensemble manifest and metrics.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Comma-separated seeds, one model each (default: config seed + 0..members).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Fraction of recordings held out for checkpoint selection.
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    /// Seed of the grouped train/validation split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Retrain seeds whose model file already exists.
    #[arg(long)]
    pub overwrite: bool,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Serialize)]
struct SeedReport {
    seed: u64,
    file: String,
    epochs_run: usize,
    best_epoch: usize,
    val: PdrMetrics,
}

#[derive(Serialize)]
struct TrainReport {
    n_train: usize,
    n_val: usize,
    train_config: TrainConfig,
    seeds: Vec<SeedReport>,
    ensemble: PdrMetrics,
    spectral_peak_baseline: PdrMetrics,
}

fn subset(data: &[LabeledExample], idx: &[usize]) -> Vec<LabeledExample> {
    idx.iter().map(|&i| data[i].clone()).collect()
}

fn maps_labels(data: &[LabeledExample]) -> (Vec<PdrFeatureMap>, Vec<f64>) {
    (data.iter().map(|e| e.features.clone()).collect(), data.iter().map(|e| e.label_hz).collect())
}

fn load_nonempty(manifest: &Path) -> Result<Vec<LabeledExample>> {
    let data = load_dataset(manifest)?;
    if data.is_empty() {
        return Err(InputError(format!("{} contains no examples", manifest.display())).into());
    }
    Ok(data)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<String> {
    let json = serde_json::to_string_pretty(value)?;
    write_atomic(path, format!("{json}\n").as_bytes())?;
    Ok(json)
}

pub fn run_train(args: TrainArgs, cfg_path: Option<&PathBuf>) -> Result<()> {
    let base = args.train.apply(crate::load_config(cfg_path)?.pdr.train);
    let data = load_nonempty(&args.manifest)?;
    let seeds: Vec<u64> = if args.seeds.is_empty() {
        (0..base.members.max(1) as u64).map(|i| base.seed + i).collect()
    } else {
        args.seeds.clone()
    };
    let (tr, va) = split_grouped(&data, 1.0 - args.val_frac, args.split_seed)?;
    let (train_set, val_set) = (subset(&data, &tr), subset(&data, &va));
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let files: Vec<String> = seeds.iter().map(|s| format!("pdr-seed{s}.model")).collect();
    let models = par::map_range(seeds.len(), |i| -> Result<PdrEnsemble> {
        let path = args.out.join(&files[i]);
        if path.exists() && !args.overwrite {
            info!("seed {}: reusing {}", seeds[i], path.display());
            return load_ensemble(&path).map_err(Into::into);
        }
        let cfg = TrainConfig { seed: seeds[i], members: 1, ..base.clone() };
        let model = train(&train_set, Some(&val_set), &cfg)?;
        let ens = PdrEnsemble { members: vec![model] };
        save_ensemble(&path, &ens, Some(&cfg))?;
        Ok(ens)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let (val_maps, val_labels) = maps_labels(&val_set);
    let mut reports = Vec::new();
    for ((seed, file), ens) in seeds.iter().zip(&files).zip(&models) {
        let m = &ens.members[0];
        reports.push(SeedReport {
            seed: *seed,
            file: file.clone(),
            epochs_run: m.meta.epochs_run,
            best_epoch: m.meta.best_epoch,
            val: pdr_metrics(&ens.predict_many(&val_maps), &val_labels)?,
        });
    }
    let ensemble = PdrEnsemble { members: models.into_iter().flat_map(|e| e.members).collect() };
    let baseline: Vec<f64> = val_maps.iter().map(spectral_peak_baseline).collect();
    let report = TrainReport {
        n_train: train_set.len(),
        n_val: val_set.len(),
        train_config: base,
        seeds: reports,
        ensemble: pdr_metrics(&ensemble.predict_many(&val_maps), &val_labels)?,
        spectral_peak_baseline: pdr_metrics(&baseline, &val_labels)?,
    };
    let manifest = EnsembleManifest {
        members: seeds.iter().zip(&files).map(|(s, f)| ManifestMember { seed: *s, file: f.clone() }).collect(),
    };
    write_json(&args.out.join(ENSEMBLE_MANIFEST), &manifest)?;
    println!("{}", write_json(&args.out.join("train_metrics.json"), &report)?);
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub manifest: PathBuf,
    /// Number of grouped cross-validation folds.
    #[arg(long, default_value_t = 4)]
    pub kfold: usize,
    /// Seed of the fold assignment.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Score this trained model on the whole manifest instead of cross-validating.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Also write the metrics JSON here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Serialize)]
struct FoldReport {
    fold: usize,
    n_test: usize,
    model: PdrMetrics,
    spectral_peak_baseline: PdrMetrics,
}

#[derive(Serialize)]
struct EvalReport {
    folds: Vec<FoldReport>,
    pooled: PdrMetrics,
    pooled_baseline: PdrMetrics,
}

pub fn run_eval(args: EvalArgs, cfg_path: Option<&PathBuf>) -> Result<()> {
    let data = load_nonempty(&args.manifest)?;
    let report = if let Some(path) = &args.model {
        let model = load_model(path)?;
        let (maps, labels) = maps_labels(&data);
        let pred = model.predict_many(&maps);
        let base: Vec<f64> = maps.iter().map(spectral_peak_baseline).collect();
        let m = pdr_metrics(&pred, &labels)?;
        let b = pdr_metrics(&base, &labels)?;
        EvalReport {
            folds: vec![FoldReport { fold: 0, n_test: data.len(), model: m, spectral_peak_baseline: b }],
            pooled: m,
            pooled_baseline: b,
        }
    } else {
        let cfg = args.train.apply(crate::load_config(cfg_path)?.pdr.train);
        let folds = kfold_grouped(&data, args.kfold, args.split_seed)?;
        let (mut all_pred, mut all_base, mut all_lab) = (Vec::new(), Vec::new(), Vec::new());
        let mut reports = Vec::new();
        for (k, test_idx) in folds.iter().enumerate() {
            let train_idx: Vec<usize> = (0..data.len()).filter(|i| !test_idx.contains(i)).collect();
            info!("fold {k}: {} train, {} test", train_idx.len(), test_idx.len());
            let ens = train_ensemble(&subset(&data, &train_idx), None, &cfg)?;
            let (maps, labels) = maps_labels(&subset(&data, test_idx));
            let pred = ens.predict_many(&maps);
            let base: Vec<f64> = maps.iter().map(spectral_peak_baseline).collect();
            reports.push(FoldReport {
                fold: k,
                n_test: labels.len(),
                model: pdr_metrics(&pred, &labels)?,
                spectral_peak_baseline: pdr_metrics(&base, &labels)?,
            });
            all_pred.extend(pred);
            all_base.extend(base);
            all_lab.extend(labels);
        }
        EvalReport {
            folds: reports,
            pooled: pdr_metrics(&all_pred, &all_lab)?,
            pooled_baseline: pdr_metrics(&all_base, &all_lab)?,
        }
    };
    let json = match &args.out {
        Some(p) => write_json(p, &report)?,
        None => serde_json::to_string_pretty(&report)?,
    };
    println!("{json}");
    Ok(())
}
