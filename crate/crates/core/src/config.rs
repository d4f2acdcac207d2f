//! Pipeline configuration, read from TOML. `${VAR}` anywhere in the text is
//! replaced by the environment variable's value before parsing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::abnormality::Thresholds;
use crate::artifact::ArtifactConfig;
use crate::pdr::TrainConfig;
use crate::preprocess::SelectionConfig;
use crate::report::client::ProviderConfig;
use crate::spectral::MultitaperConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    #[default]
    Average,
    Rest,
    None,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceConfig {
    pub scheme: ReferenceKind,
    /// Required for `rest`.
    pub transfer_matrix: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MontageConfig {
    /// Extra raw-label renames applied before canonicalization.
    pub aliases: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdrConfig {
    /// Ensemble model file; the spectral-peak estimate is used without one.
    pub model: Option<PathBuf>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub generator: Option<ProviderConfig>,
    pub verifiers: Vec<ProviderConfig>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_in_flight: usize,
    pub retry_attempts: u32,
    pub retry_base_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            generator: None,
            verifiers: Vec::new(),
            temperature: 0.0,
            max_tokens: 1024,
            max_in_flight: 4,
            retry_attempts: 3,
            retry_base_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub montage: MontageConfig,
    pub reference: ReferenceConfig,
    pub epoch_len_s: f64,
    /// Keep only the first N seconds of each recording.
    pub crop_seconds: Option<f64>,
    pub selection: SelectionConfig,
    pub artifact: ArtifactConfig,
    /// Replace contaminated epoch-channels by their neighbors' mean.
    pub repair: bool,
    pub multitaper: MultitaperConfig,
    pub thresholds: Thresholds,
    pub pdr: PdrConfig,
    pub llm: LlmConfig,
    pub output_dir: PathBuf,
    pub batch_workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            montage: MontageConfig::default(),
            reference: ReferenceConfig::default(),
            epoch_len_s: 4.0,
            crop_seconds: None,
            selection: SelectionConfig::default(),
            artifact: ArtifactConfig::default(),
            repair: true,
            multitaper: MultitaperConfig::default(),
            thresholds: Thresholds::default(),
            pdr: PdrConfig::default(),
            llm: LlmConfig::default(),
            output_dir: PathBuf::from("results"),
            batch_workers: 2,
        }
    }
}

/// Replaces `${NAME}` with the environment value; unset names are an error.
pub fn interpolate_env(text: &str) -> Result<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());
    let mut missing = Vec::new();
    let out = re.replace_all(text, |c: &regex::Captures| match std::env::var(&c[1]) {
        Ok(v) => v,
        Err(_) => {
            missing.push(c[1].to_string());
            String::new()
        }
    });
    if !missing.is_empty() {
        return Err(Error::Config(format!("environment variable(s) not set: {}", missing.join(", "))));
    }
    Ok(out.into_owned())
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(&interpolate_env(text)?).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        let positives = [
            ("epoch_len_s", self.epoch_len_s),
            ("selection.max_abs_uv", self.selection.max_abs_uv),
            ("selection.ratio_sd", self.selection.ratio_sd),
            ("artifact.candidate_percentile", self.artifact.candidate_percentile),
            ("artifact.neighbor_percentile", self.artifact.neighbor_percentile),
            ("artifact.bad_channel_fraction", self.artifact.bad_channel_fraction),
            ("artifact.density_floor", self.artifact.density_floor),
            ("thresholds.gbs_pdr_hz", t.gbs_pdr_hz),
            ("thresholds.gbs_pdr_with_slow_hz", t.gbs_pdr_with_slow_hz),
            ("thresholds.slow_ratio_pct", t.slow_ratio_pct),
            ("thresholds.lr_ratio", t.lr_ratio),
            ("thresholds.pdr_diff_hz", t.pdr_diff_hz),
            ("thresholds.focal_score", t.focal_score),
            ("thresholds.alpha_score", t.alpha_score),
            ("multitaper.nw", self.multitaper.nw),
        ];
        if let Some((name, v)) = positives.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        if self.artifact.candidate_percentile > 100.0 || self.artifact.neighbor_percentile > 100.0 {
            return Err(Error::Config("percentiles must not exceed 100".into()));
        }
        if self.artifact.robust_z < 0.0 {
            return Err(Error::Config("artifact.robust_z must not be negative".into()));
        }
        if self.multitaper.n_tapers == 0 {
            return Err(Error::Config("multitaper.n_tapers must be positive".into()));
        }
        if self.crop_seconds.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("crop_seconds must be positive".into()));
        }
        if self.reference.scheme == ReferenceKind::Rest && self.reference.transfer_matrix.is_none() {
            return Err(Error::Config("reference.scheme = \"rest\" needs reference.transfer_matrix".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.epoch_len_s, 4.0);
        assert_eq!(c.selection.max_abs_uv, 150.0);
        assert_eq!(c.selection.ratio_sd, 2.2);
        assert_eq!(c.artifact.bad_channel_fraction, 0.30);
        assert_eq!(c.thresholds.gbs_pdr_hz, 7.5);
        assert_eq!(c.thresholds.focal_score, 2.4);
        assert_eq!(c.thresholds.alpha_score, 1.6);
        assert_eq!(c.pdr.train.epochs, 200);
        assert_eq!(c.pdr.train.batch, 16);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml_str(&c.to_toml()).unwrap(), c);
        let c = PipelineConfig::from_toml_str("epoch_len_s = 2.0\n[thresholds]\nfocal_score = 3.0\n").unwrap();
        assert_eq!(c.epoch_len_s, 2.0);
        assert_eq!(c.thresholds.focal_score, 3.0);
        assert_eq!(c.thresholds.alpha_score, 1.6);
    }

    #[test]
    fn env_interpolation() {
        std::env::set_var("EEGBG_CFG_TEST_DIR", "/tmp/out");
        let c = PipelineConfig::from_toml_str("output_dir = \"${EEGBG_CFG_TEST_DIR}/r\"\n").unwrap();
        assert_eq!(c.output_dir, PathBuf::from("/tmp/out/r"));
        match PipelineConfig::from_toml_str("output_dir = \"${EEGBG_CFG_TEST_UNSET}\"\n") {
            Err(Error::Config(m)) => assert!(m.contains("EEGBG_CFG_TEST_UNSET")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml_str("[thresholds]\nfocal_score = -1.0\n").is_err());
        assert!(PipelineConfig::from_toml_str("unknown_key = 1\n").is_err());
        assert!(PipelineConfig::from_toml_str("[reference]\nscheme = \"rest\"\n").is_err());
    }
}
