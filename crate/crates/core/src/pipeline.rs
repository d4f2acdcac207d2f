//! Recording-level analysis: everything from a loaded recording up to the
//! report feature JSON, plus the optional LLM report stage.

use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::abnormality::{interpret, AbnormalityFindings};
use crate::artifact::{detect, repair_epochs, ArtifactMask};
use crate::config::{LlmConfig, PipelineConfig, ReferenceKind};
use crate::ingest::{apply_montage, Recording};
use crate::montage::MontageMap;
use crate::pdr::{build_feature_map, spectral_peak_baseline, PdrEnsemble, Side};
use crate::preprocess::{
    load_transfer_matrix, rereference, segment_epochs, select_wake_epochs, ReferenceScheme,
    SelectionOutcome,
};
use crate::report::client::{GenerationParams, LlmClient, RetryPolicy};
use crate::report::verify::{verify_report, VerificationResult};
use crate::report::{build_feature_json, generate_report, GeneratedReport, ReportFeatures};
use crate::spectral::{average_psd, background_features, epoch_psds, BackgroundFeatures, PdrEstimate, PsdTable};
use crate::{Error, Result};

/// Frequency range of the per-epoch spectra.
pub const PSD_FMIN_HZ: f64 = 1.0;
pub const PSD_FMAX_HZ: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdrSource {
    Model,
    SpectralPeak,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub features: BackgroundFeatures,
    pub findings: AbnormalityFindings,
    pub report_features: ReportFeatures,
    pub pdr_source: PdrSource,
    pub selection: SelectionOutcome,
    pub artifacts: ArtifactMask,
    /// Averaged PSD over usable epoch-channels.
    pub psd: PsdTable,
    pub warnings: Vec<String>,
}

/// Label aliases, montage, crop and re-referencing.
pub fn prepare(rec: &Recording, cfg: &PipelineConfig, montage: &MontageMap) -> Result<Recording> {
    let mut rec = rec.clone();
    for ch in rec.channels.iter_mut() {
        if let Some(to) = cfg.montage.aliases.get(ch.trim()) {
            *ch = to.clone();
        }
    }
    let mut rec = apply_montage(&rec, montage)?;
    if let Some(s) = cfg.crop_seconds {
        rec = rec.crop(s);
    }
    let scheme = match cfg.reference.scheme {
        ReferenceKind::Average => ReferenceScheme::Average,
        ReferenceKind::None => ReferenceScheme::None,
        ReferenceKind::Rest => {
            let path = cfg
                .reference
                .transfer_matrix
                .as_ref()
                .ok_or_else(|| Error::Config("rest reference needs a transfer matrix".into()))?;
            ReferenceScheme::Rest(load_transfer_matrix(path)?)
        }
    };
    rereference(&rec, &scheme)
}

/// Runs the quantitative chain on one recording. Without a model the PDR
/// comes from the spectral peak of the posterior feature maps.
pub fn analyze(rec: &Recording, cfg: &PipelineConfig, model: Option<&PdrEnsemble>) -> Result<Analysis> {
    cfg.validate()?;
    let montage = MontageMap::standard_10_20();
    let rec = prepare(rec, cfg, &montage)?;
    let mut warnings = rec.annotation_warnings();

    let mut es = segment_epochs(&rec, cfg.epoch_len_s)?;
    if es.n_epochs() == 0 {
        return Err(Error::InvalidParameter(format!(
            "recording of {:.1} s is shorter than one {} s epoch",
            rec.duration_s, cfg.epoch_len_s
        )));
    }
    let psds = epoch_psds(&es, PSD_FMIN_HZ, PSD_FMAX_HZ, &cfg.multitaper)?;
    let selection = select_wake_epochs(&es, &rec.annotations, &psds, &cfg.selection)?;
    es.include_mask = selection.include_mask.clone();
    let n_included = es.n_included();
    info!("{n_included} of {} epochs selected", es.n_epochs());
    if n_included == 0 {
        return Err(Error::InvalidParameter("no epochs survive wake-epoch selection".into()));
    }

    let artifacts = detect(&es, &montage, &cfg.artifact, &cfg.multitaper)?;
    warnings.extend(artifacts.warnings.iter().cloned());

    let (psds, unrepaired) = if cfg.repair && artifacts.n_flagged() > 0 {
        let out = repair_epochs(&es, &artifacts, &montage)?;
        (epoch_psds(&out.epochs, PSD_FMIN_HZ, PSD_FMAX_HZ, &cfg.multitaper)?, out.unrepaired)
    } else {
        (psds, artifacts.mask.clone())
    };
    let include = &es.include_mask;
    let use_entry = |e: usize, ch: usize| include[e] && !unrepaired[[e, ch]];
    let psd = average_psd(&psds, use_entry)?;
    let mut features = background_features(&psd, &psds, use_entry, &montage)?;
    features.bad_channels = artifacts.bad_channels.clone();
    features.included_epochs = n_included;

    let maps = [build_feature_map(&psd, Side::Left)?, build_feature_map(&psd, Side::Right)?];
    let (est, pdr_source) = match model {
        Some(m) => {
            let p = m.predict_many(&maps);
            (PdrEstimate { left: p[0], right: p[1] }, PdrSource::Model)
        }
        None => (
            PdrEstimate { left: spectral_peak_baseline(&maps[0]), right: spectral_peak_baseline(&maps[1]) },
            PdrSource::SpectralPeak,
        ),
    };
    features.pdr = Some(est);

    let findings = interpret(&features, &montage, &cfg.thresholds)?;
    let report_features = build_feature_json(&findings, &features);
    for w in &warnings {
        warn!("{w}");
    }
    Ok(Analysis { features, findings, report_features, pdr_source, selection, artifacts, psd, warnings })
}

impl LlmConfig {
    pub fn params(&self) -> GenerationParams {
        GenerationParams { temperature: self.temperature, max_tokens: self.max_tokens }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.retry_attempts.max(1),
            base_delay: Duration::from_millis(self.retry_base_ms),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub report: GeneratedReport,
    pub verification: Option<VerificationResult>,
}

/// Generates the narrative report and, when verifiers are given, has them
/// classify it.
pub fn report_stage(
    rf: &ReportFeatures,
    generator: &dyn LlmClient,
    verifiers: &[&dyn LlmClient],
    llm: &LlmConfig,
    policy: &RetryPolicy,
) -> Result<ReportOutcome> {
    let params = llm.params();
    let report = generate_report(generator, rf, &params, policy)?;
    let verification = if verifiers.is_empty() {
        None
    } else {
        Some(verify_report(&report.text, verifiers, &params, policy, llm.max_in_flight.max(1))?)
    };
    Ok(ReportOutcome { report, verification })
}

/// `channel,f0,f1,...` header then one row per channel.
pub fn psd_csv(psd: &PsdTable) -> String {
    let mut out = String::from("channel");
    for f in &psd.freqs {
        out.push_str(&format!(",{f}"));
    }
    out.push('\n');
    for (ch, row) in psd.channels.iter().zip(psd.power.rows()) {
        out.push_str(ch);
        for v in row {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_recording, FocalTheta, SynthConfig};

    fn short(cfg: SynthConfig) -> Recording {
        synth_recording(&SynthConfig { duration_s: 240.0, ..cfg })
    }

    #[test]
    fn normal_recording_has_no_findings() {
        let a = analyze(&short(SynthConfig::default()), &PipelineConfig::default(), None).unwrap();
        assert!(a.findings.is_normal(), "{:?}", a.findings);
        let pdr = a.features.pdr.unwrap();
        assert!((pdr.left - 10.0).abs() < 0.5 && (pdr.right - 10.0).abs() < 0.5, "{pdr:?}");
        assert_eq!(a.pdr_source, PdrSource::SpectralPeak);
        assert_eq!(a.features.total_epochs, 60);
    }

    #[test]
    fn left_temporal_theta_is_focal() {
        let rec = short(SynthConfig {
            focal_theta: Some(FocalTheta { channels: vec!["F7".into(), "T3".into(), "T5".into()], hz: 6.0, amplitude_uv: 16.0 }),
            ..Default::default()
        });
        let a = analyze(&rec, &PipelineConfig::default(), None).unwrap();
        assert!(a.findings.focal_slow, "{:?}", a.findings);
        assert!(a.findings.focal_electrodes.iter().all(|e| ["F7", "T3", "T5"].contains(&e.as_str())), "{:?}", a.findings.focal_electrodes);
        assert!(a.report_features.abnormal_findings.iter().any(|s| s.contains("left")), "{:?}", a.report_features);
    }

    #[test]
    fn too_short_is_an_error() {
        let rec = synth_recording(&SynthConfig { duration_s: 2.0, ..Default::default() });
        assert!(matches!(analyze(&rec, &PipelineConfig::default(), None), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn psd_csv_shape() {
        let a = analyze(&short(SynthConfig::default()), &PipelineConfig::default(), None).unwrap();
        let csv = psd_csv(&a.psd);
        assert_eq!(csv.lines().count(), 20);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), a.psd.freqs.len() + 1);
    }
}
