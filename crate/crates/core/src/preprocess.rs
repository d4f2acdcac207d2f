//! Re-referencing, fixed-length epoching and awake eyes-closed epoch
//! selection.

use std::path::Path;

use ndarray::{s, Array2, Array3, Axis};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Annotation, Recording};
use crate::spectral::{PsdTable, BAND_BETA, BAND_DELTA, BAND_TOTAL};

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceScheme {
    /// Subtract the per-sample channel mean.
    Average,
    /// Apply an externally computed `[channels × channels]` transfer matrix.
    Rest(Array2<f64>),
    None,
}

/// Reads a whitespace-separated square matrix, one row per line.
pub fn load_transfer_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| {
                        Error::InvalidParameter(format!(
                            "transfer matrix row {}: `{v}` is not a number",
                            i + 1
                        ))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!(
            "transfer matrix must be square; {n} rows with lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    Ok(Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]))
}

pub fn rereference(rec: &Recording, scheme: &ReferenceScheme) -> Result<Recording> {
    let data = match scheme {
        ReferenceScheme::None => rec.data.clone(),
        ReferenceScheme::Average => {
            let mean = rec
                .data
                .mean_axis(Axis(0))
                .expect("recording has channels");
            &rec.data - &mean.insert_axis(Axis(0))
        }
        ReferenceScheme::Rest(g) => {
            let c = rec.channels.len();
            if g.dim() != (c, c) {
                return Err(Error::Dimension(format!(
                    "transfer matrix is {:?}, recording has {c} channels",
                    g.dim()
                )));
            }
            g.dot(&rec.data)
        }
    };
    Ok(Recording {
        data,
        ..rec.clone()
    })
}

/// Non-overlapping epochs `[n_epochs, channels, samples_per_epoch]` in µV.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub channels: Vec<String>,
    pub epochs: Array3<f64>,
    pub epoch_len_s: f64,
    pub fs: f64,
    pub include_mask: Vec<bool>,
    pub source_offsets_s: Vec<f64>,
}

impl EpochSet {
    pub fn n_epochs(&self) -> usize {
        self.epochs.len_of(Axis(0))
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn samples_per_epoch(&self) -> usize {
        self.epochs.len_of(Axis(2))
    }

    pub fn n_included(&self) -> usize {
        self.include_mask.iter().filter(|&&b| b).count()
    }

    pub fn included_indices(&self) -> Vec<usize> {
        (0..self.n_epochs())
            .filter(|&i| self.include_mask[i])
            .collect()
    }

    /// Concatenates the epochs back into a continuous recording.
    pub fn to_recording(&self) -> Recording {
        let (n, c, spe) = self.epochs.dim();
        let mut data = Array2::<f64>::zeros((c, n * spe));
        for e in 0..n {
            data.slice_mut(s![.., e * spe..(e + 1) * spe])
                .assign(&self.epochs.slice(s![e, .., ..]));
        }
        Recording {
            channels: self.channels.clone(),
            fs: self.fs,
            duration_s: (n * spe) as f64 / self.fs,
            data,
            annotations: Vec::new(),
        }
    }
}

pub fn segment_epochs(rec: &Recording, epoch_len_s: f64) -> Result<EpochSet> {
    let spe_f = epoch_len_s * rec.fs;
    if !(epoch_len_s > 0.0) || (spe_f - spe_f.round()).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "epoch length {epoch_len_s} s × {} Hz is not a whole number of samples",
            rec.fs
        )));
    }
    let spe = spe_f.round() as usize;
    let n = rec.n_samples() / spe;
    let c = rec.channels.len();
    let mut epochs = Array3::<f64>::zeros((n, c, spe));
    for e in 0..n {
        epochs
            .slice_mut(s![e, .., ..])
            .assign(&rec.data.slice(s![.., e * spe..(e + 1) * spe]));
    }
    Ok(EpochSet {
        channels: rec.channels.clone(),
        epochs,
        epoch_len_s,
        fs: rec.fs,
        include_mask: vec![true; n],
        source_offsets_s: (0..n).map(|e| e as f64 * epoch_len_s).collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SelectionConfig {
    /// Epochs whose absolute amplitude exceeds this (µV) are excluded.
    pub max_abs_uv: f64,
    /// Beta/delta ratio outlier cut in standard deviations above the mean.
    pub ratio_sd: f64,
    /// Case-insensitive substrings marking eye events.
    pub eye_substrings: Vec<String>,
    /// Case-insensitive whole-word codes marking eye events.
    pub eye_codes: Vec<String>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            max_abs_uv: 150.0,
            ratio_sd: 2.2,
            eye_substrings: vec!["eye open".into(), "eye close".into(), "eyes open".into(), "eyes close".into()],
            eye_codes: vec!["eo".into(), "ec".into()],
        }
    }
}

impl SelectionConfig {
    fn eye_matcher(&self) -> Regex {
        let mut alts: Vec<String> = self.eye_substrings.iter().map(|s| regex::escape(s)).collect();
        alts.extend(
            self.eye_codes
                .iter()
                .map(|c| format!(r"\b{}\b", regex::escape(c))),
        );
        if alts.is_empty() {
            return Regex::new("$^").unwrap();
        }
        Regex::new(&format!("(?i){}", alts.join("|"))).expect("escaped patterns are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    EyeAnnotation,
    HighAmplitude,
    BetaRatio,
    DeltaRatio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub include_mask: Vec<bool>,
    /// First rule that fired for each excluded epoch.
    pub reasons: Vec<Option<ExclusionReason>>,
    pub beta_threshold: Option<f64>,
    pub delta_threshold: Option<f64>,
}

/// Channel-averaged `(beta, delta)` relative band powers of one epoch.
pub fn epoch_band_ratios(psd: &PsdTable) -> Result<(f64, f64)> {
    let mut beta = 0.0;
    let mut delta = 0.0;
    let c = psd.n_channels();
    for ch in 0..c {
        let total = psd.channel_band_power(ch, BAND_TOTAL.0, BAND_TOTAL.1)?;
        if total > 0.0 {
            beta += psd.channel_band_power(ch, BAND_BETA.0, BAND_BETA.1)? / total;
            delta += psd.channel_band_power(ch, BAND_DELTA.0, BAND_DELTA.1)? / total;
        }
    }
    Ok((beta / c as f64, delta / c as f64))
}

/// Applies the three exclusion rules. The ratio statistics are computed over
/// the epochs that survive the annotation and amplitude rules.
pub fn select_wake_epochs(
    es: &EpochSet,
    annotations: &[Annotation],
    epoch_psds: &[PsdTable],
    cfg: &SelectionConfig,
) -> Result<SelectionOutcome> {
    let n = es.n_epochs();
    if epoch_psds.len() != n {
        return Err(Error::Dimension(format!(
            "{} epoch PSDs for {n} epochs",
            epoch_psds.len()
        )));
    }
    let eye = cfg.eye_matcher();
    let mut reasons: Vec<Option<ExclusionReason>> = vec![None; n];
    for (e, reason) in reasons.iter_mut().enumerate() {
        if !es.include_mask[e] {
            continue;
        }
        let start = es.source_offsets_s[e];
        let end = start + es.epoch_len_s;
        if annotations
            .iter()
            .any(|a| a.onset_s >= start && a.onset_s < end && eye.is_match(&a.label))
        {
            *reason = Some(ExclusionReason::EyeAnnotation);
            continue;
        }
        let peak = es
            .epochs
            .index_axis(Axis(0), e)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > cfg.max_abs_uv {
            *reason = Some(ExclusionReason::HighAmplitude);
        }
    }

    let survivors: Vec<usize> = (0..n)
        .filter(|&e| es.include_mask[e] && reasons[e].is_none())
        .collect();
    let ratios: Vec<(f64, f64)> = survivors
        .iter()
        .map(|&e| epoch_band_ratios(&epoch_psds[e]))
        .collect::<Result<_>>()?;
    let (mut beta_thr, mut delta_thr) = (None, None);
    if survivors.len() >= 2 {
        let (bm, bs) = mean_sd(ratios.iter().map(|r| r.0));
        let (dm, ds) = mean_sd(ratios.iter().map(|r| r.1));
        let bt = bm + cfg.ratio_sd * bs;
        let dt = dm + cfg.ratio_sd * ds;
        for (&e, &(b, d)) in survivors.iter().zip(&ratios) {
            if b > bt {
                reasons[e] = Some(ExclusionReason::BetaRatio);
            } else if d > dt {
                reasons[e] = Some(ExclusionReason::DeltaRatio);
            }
        }
        beta_thr = Some(bt);
        delta_thr = Some(dt);
    }
    let include_mask = (0..n)
        .map(|e| es.include_mask[e] && reasons[e].is_none())
        .collect();
    Ok(SelectionOutcome {
        include_mask,
        reasons,
        beta_threshold: beta_thr,
        delta_threshold: delta_thr,
    })
}

/// Population mean and standard deviation (divisor n).
pub(crate) fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
