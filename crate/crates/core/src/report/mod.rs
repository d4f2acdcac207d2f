//! Narrative report generation and verification.
//!
//! Findings are flattened into a fixed-key JSON object, embedded in a
//! versioned prompt and sent to a language model. The reply must contain the
//! four section headers exactly once and in order; one repair request is
//! made before giving up. Verification asks three further models for a
//! `[GBS, focal]` array and takes the majority.

pub mod client;
pub mod prompt;
pub mod verify;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abnormality::AbnormalityFindings;
use crate::spectral::{Band, BackgroundFeatures};
use crate::{fsutil, Error, Result};
use client::{send_with_retry, GenerationParams, LlmClient, RetryPolicy};
use prompt::{build_prompt, sha256_hex, GENERATE_TEMPLATE_VERSION, REPAIR_INSTRUCTION, SECTION_HEADERS};
pub use verify::{verify_report, VerificationResult};

pub const FINDING_PREFIX: &str = "Focal slow wave or asymmetric abnormality detected";

/// The feature object handed to the report writer. Keys and their order are fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFeatures {
    #[serde(rename = "EEG_quality")]
    pub eeg_quality: String,
    pub bad_channels: Vec<String>,
    #[serde(rename = "backgroundFrequency")]
    pub background_frequency: String,
    pub bg_active: String,
    pub bg_amp: String,
    pub bg_amp_sym: String,
    pub bg_freq: String,
    #[serde(rename = "abnormalFindings")]
    pub abnormal_findings: Vec<String>,
}

impl ReportFeatures {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain strings serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Recordings with fewer surviving epochs than this are rated "Poor".
pub const MIN_EPOCHS_FOR_QUALITY: usize = 10;

pub fn eeg_quality(included: usize, total: usize) -> &'static str {
    if total == 0 || included < MIN_EPOCHS_FOR_QUALITY {
        return "Poor";
    }
    let frac = included as f64 / total as f64;
    if frac >= 0.5 {
        "Good"
    } else if frac >= 0.2 {
        "Fair"
    } else {
        "Poor"
    }
}

/// Peak-to-peak alpha amplitude bucket.
pub fn amplitude_bucket(uv: f64) -> &'static str {
    if uv < 10.0 {
        "low (<10 uV)"
    } else if uv <= 50.0 {
        "medium (10-50 uV)"
    } else {
        "high (>50 uV)"
    }
}

pub fn build_feature_json(f: &AbnormalityFindings, features: &BackgroundFeatures) -> ReportFeatures {
    let pdr = f.pdr;
    let bg_amp_sym = if f.amplitude_asymmetry {
        if f.scores.alpha_left >= f.scores.alpha_right {
            "lower in right"
        } else {
            "lower in left"
        }
    } else {
        "symmetric"
    };
    let bg_freq = if f.pdr_asymmetry {
        if pdr.right < pdr.left {
            "asymmetric, slower in right"
        } else {
            "asymmetric, slower in left"
        }
    } else {
        "symmetric"
    };
    let mut findings = Vec::new();
    if f.gbs {
        findings.push("Generalized background slowing detected".to_string());
    }
    if f.pdr_asymmetry {
        findings.push(format!(
            "{FINDING_PREFIX};Background frequency differs between hemispheres (right {:.1} Hz, left {:.1} Hz)",
            pdr.right, pdr.left
        ));
    }
    if f.amplitude_asymmetry && !f.lower_alpha_electrodes.is_empty() {
        findings.push(format!(
            "{FINDING_PREFIX};Lower alpha amplitude in {} channels",
            f.lower_alpha_electrodes.join(", ")
        ));
    }
    if f.focal_slow {
        findings.push(format!(
            "{FINDING_PREFIX};Focal slow waves in {} channels ({})",
            f.focal_electrodes.join(", "),
            crate::abnormality::region_phrase(&f.focal_electrodes)
        ));
    }
    ReportFeatures {
        eeg_quality: eeg_quality(features.included_epochs, features.total_epochs).to_string(),
        bad_channels: features.bad_channels.clone(),
        background_frequency: format!("Right: {:.1} Hz, Left: {:.1} Hz", pdr.right, pdr.left),
        bg_active: if f.gbs { "Generalized background slowing" } else { "Normal background frequency" }.to_string(),
        bg_amp: amplitude_bucket(features.band_amplitude.get(&Band::Alpha).copied().unwrap_or(0.0)).to_string(),
        bg_amp_sym: bg_amp_sym.to_string(),
        bg_freq: bg_freq.to_string(),
        abnormal_findings: findings,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub header: String,
    pub body: String,
}

/// Splits report text on the four headers. Each must appear once, on its own
/// line, in order.
pub fn parse_sections(text: &str) -> std::result::Result<Vec<Section>, String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut at = Vec::with_capacity(4);
    for h in SECTION_HEADERS {
        let hits: Vec<usize> = lines.iter().enumerate().filter(|(_, l)| l.trim() == h).map(|(i, _)| i).collect();
        match hits.len() {
            0 => return Err(format!("missing `{h}`")),
            1 => at.push(hits[0]),
            n => return Err(format!("`{h}` appears {n} times")),
        }
    }
    if at.windows(2).any(|w| w[0] > w[1]) {
        return Err("section headers out of order".into());
    }
    Ok((0..4)
        .map(|k| {
            let end = at.get(k + 1).copied().unwrap_or(lines.len());
            Section {
                header: SECTION_HEADERS[k].to_string(),
                body: lines[at[k] + 1..end].join("\n").trim().to_string(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub timestamp: String,
    pub prompt_sha256: String,
    pub template_version: String,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedReport {
    pub text: String,
    pub sections: Vec<Section>,
    pub provenance: Provenance,
}

/// RFC 3339 UTC time, taken from `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0)
        });
    time::OffsetDateTime::from_unix_timestamp(secs)
        .unwrap_or(time::OffsetDateTime::UNIX_EPOCH)
        .format(&time::format_description::well_known::Rfc3339)
        .expect("UTC timestamps format")
}

pub fn generate_report(
    client: &dyn LlmClient,
    rf: &ReportFeatures,
    params: &GenerationParams,
    policy: &RetryPolicy,
) -> Result<GeneratedReport> {
    let prompt = build_prompt(&rf.to_json());
    let provenance = |repaired| Provenance {
        model: client.model_id(),
        timestamp: timestamp(),
        prompt_sha256: sha256_hex(&prompt),
        template_version: GENERATE_TEMPLATE_VERSION.to_string(),
        repaired,
    };
    let text = send_with_retry(client, &prompt, params, policy)?;
    match parse_sections(&text) {
        Ok(sections) => return Ok(GeneratedReport { text, sections, provenance: provenance(false) }),
        Err(detail) => log::warn!("report structure invalid ({detail}); asking for a repair"),
    }
    let repair_prompt = format!("{prompt}{REPAIR_INSTRUCTION}");
    let text = send_with_retry(client, &repair_prompt, params, policy)?;
    match parse_sections(&text) {
        Ok(sections) => Ok(GeneratedReport { text, sections, provenance: provenance(true) }),
        Err(detail) => Err(Error::ReportStructure { detail, raw: text }),
    }
}

/// Runs `f` over `items` with at most `cap` threads at a time, keeping order.
pub fn bounded_map<T: Sync, R: Send>(items: &[T], cap: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let cap = cap.max(1);
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(cap) {
        if chunk.len() == 1 {
            out.push(f(&chunk[0]));
            continue;
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|it| s.spawn(|| f(it))).collect();
            out.extend(handles.into_iter().map(|h| h.join().expect("worker panicked")));
        });
    }
    out
}

/// Writes `<id>.features.json`, and the report and votes when present.
/// Existing files are left alone unless `overwrite` is set.
pub fn persist(
    dir: &Path,
    recording_id: &str,
    rf: &ReportFeatures,
    report: Option<&GeneratedReport>,
    verification: Option<&VerificationResult>,
    overwrite: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![(
        dir.join(format!("{recording_id}.features.json")),
        format!("{}\n", rf.to_json()).into_bytes(),
    )];
    if let Some(r) = report {
        files.push((dir.join(format!("{recording_id}.report.txt")), r.text.clone().into_bytes()));
    }
    if let Some(v) = verification {
        files.push((
            dir.join(format!("{recording_id}.verify.json")),
            format!("{}\n", serde_json::to_string_pretty(v)?).into_bytes(),
        ));
    }
    if !overwrite {
        if let Some((p, _)) = files.iter().find(|(p, _)| p.exists()) {
            return Err(Error::Config(format!("{} already exists (results are append-only)", p.display())));
        }
    }
    for (p, bytes) in &files {
        fsutil::write_atomic(p, bytes)?;
    }
    Ok(files.into_iter().map(|f| f.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abnormality::{AsymmetryReason, Scores, Thresholds};
    use crate::report::client::{LlmError, MockClient};
    use crate::spectral::{Lateral, PdrEstimate};
    use std::collections::BTreeMap;

    pub(crate) const SAMPLE_REPORT: &str = "=== EEG Findings ===\n- The EEG recording demonstrates good quality.\n=== Conclusion ===\nAbnormal EEG findings are observed.\n=== Clinical Correlation ===\nFocal slowing can reflect a structural lesion.\n=== Advanced Strategies ===\n- Neuroimaging is recommended.\n";

    fn features() -> BackgroundFeatures {
        let lat = Lateral { left: 0.0, right: 0.0, total: 0.0 };
        BackgroundFeatures {
            ap_gradient: lat,
            total_power: lat,
            slow_ratio: lat,
            lr_ratio: BTreeMap::new(),
            band_amplitude: [(Band::Alpha, 30.0)].into(),
            pdr: Some(PdrEstimate { left: 8.3, right: 8.6 }),
            bad_channels: vec!["Fp1".into(), "P3".into(), "F8".into(), "Pz".into()],
            included_epochs: 120,
            total_epochs: 150,
        }
    }

    fn findings() -> AbnormalityFindings {
        AbnormalityFindings {
            gbs: false,
            asymmetry: true,
            asymmetry_reason: Some(AsymmetryReason::Amplitude),
            pdr_asymmetry: false,
            amplitude_asymmetry: true,
            focal_slow: false,
            focal_electrodes: vec![],
            lower_alpha_electrodes: vec!["F8".into(), "F4".into()],
            scores: Scores { alpha_left: 1.7, alpha_right: 0.0, focal_left: 0.0, focal_right: 0.0 },
            pdr: PdrEstimate { left: 8.3, right: 8.6 },
            slow_ratio_total: 30.0,
            thresholds_used: Thresholds::default(),
        }
    }

    #[test]
    fn quality_buckets() {
        assert_eq!(eeg_quality(50, 100), "Good");
        assert_eq!(eeg_quality(20, 100), "Fair");
        assert_eq!(eeg_quality(19, 100), "Poor");
        assert_eq!(eeg_quality(9, 10), "Poor");
    }

    #[test]
    fn worked_example_keys_and_values() {
        let rf = build_feature_json(&findings(), &features());
        assert_eq!(rf.background_frequency, "Right: 8.6 Hz, Left: 8.3 Hz");
        assert_eq!(rf.bg_amp, "medium (10-50 uV)");
        assert_eq!(rf.bg_amp_sym, "lower in right");
        assert_eq!(
            rf.abnormal_findings,
            vec!["Focal slow wave or asymmetric abnormality detected;Lower alpha amplitude in F8, F4 channels"]
        );
        let v: serde_json::Value = serde_json::from_str(&rf.to_json()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 8);
        assert_eq!(ReportFeatures::from_json(&rf.to_json()).unwrap(), rf);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&build_feature_json(&findings(), &features()).to_json()).unwrap();
        v["extra"] = "x".into();
        assert!(ReportFeatures::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn sections_validate() {
        let s = parse_sections(SAMPLE_REPORT).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[1].body, "Abnormal EEG findings are observed.");
        assert!(parse_sections(&SAMPLE_REPORT.replace("=== Conclusion ===\n", "")).is_err());
        let swapped = "=== Conclusion ===\nx\n=== EEG Findings ===\ny\n=== Clinical Correlation ===\n=== Advanced Strategies ===\n";
        assert!(parse_sections(swapped).is_err());
    }

    #[test]
    fn repair_then_error() {
        let rf = build_feature_json(&findings(), &features());
        let broken = SAMPLE_REPORT.replace("=== Conclusion ===\n", "");
        let m = MockClient::new("g").with_default(broken.clone());
        match generate_report(&m, &rf, &GenerationParams::default(), &RetryPolicy::no_wait()) {
            Err(Error::ReportStructure { raw, .. }) => assert_eq!(raw, broken),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(m.calls().len(), 2);
        assert!(m.calls()[1].ends_with(prompt::REPAIR_INSTRUCTION));

        let m = MockClient::new("g").with_script(vec![Ok(broken)]).with_default(SAMPLE_REPORT);
        let r = generate_report(&m, &rf, &GenerationParams::default(), &RetryPolicy::no_wait()).unwrap();
        assert!(r.provenance.repaired);
    }

    #[test]
    fn transport_failure_surfaces() {
        let rf = build_feature_json(&findings(), &features());
        let m = MockClient::new("g").with_script(vec![Err(LlmError::timeout()); 3]);
        assert!(matches!(
            generate_report(&m, &rf, &GenerationParams::default(), &RetryPolicy::no_wait()),
            Err(Error::Transport { attempts: 3, .. })
        ));
    }

    #[test]
    fn bounded_map_keeps_order() {
        let v: Vec<u32> = (0..10).collect();
        assert_eq!(bounded_map(&v, 4, |x| x * 2), (0..10).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn persist_is_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let rf = build_feature_json(&findings(), &features());
        persist(dir.path(), "rec1", &rf, None, None, false).unwrap();
        assert!(persist(dir.path(), "rec1", &rf, None, None, false).is_err());
        assert!(persist(dir.path(), "rec1", &rf, None, None, true).is_ok());
    }
}
