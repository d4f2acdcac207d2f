//! Unsupervised artifact handling: HBOS scoring of every epoch-channel
//! against the other channels of the same epoch, a neighbor-electrode
//! check that keeps only anomalies confined to one electrode, repair by
//! neighbor averaging, and the bad-channel list.

mod features;
mod hbos;

pub use features::{extract_features, EpochChannelFeatures, ABS_ALPHA, FEATURE_NAMES, N_FEATURES};
pub use hbos::hbos_score;

use log::warn;
use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Recording;
use crate::montage::MontageMap;
use crate::par;
use crate::preprocess::{segment_epochs, EpochSet};
use crate::spectral::MultitaperConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactConfig {
    /// Scores above this percentile of eligible scores become candidates.
    pub candidate_percentile: f64,
    /// A candidate is confirmed when its neighbors' median score is below
    /// this percentile.
    pub neighbor_percentile: f64,
    /// Candidates must also exceed `median + robust_z · 1.4826 · MAD` of the
    /// eligible scores. Zero disables the gate.
    pub robust_z: f64,
    /// Fraction of contaminated epochs above which a channel is listed bad.
    pub bad_channel_fraction: f64,
    /// Density floor inside the logarithm.
    pub density_floor: f64,
    pub min_epochs: usize,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        ArtifactConfig {
            candidate_percentile: 95.0,
            neighbor_percentile: 75.0,
            robust_z: 5.0,
            bad_channel_fraction: 0.30,
            density_floor: 1e-12,
            min_epochs: 10,
        }
    }
}

/// Per epoch-channel artifact flags, `[n_epochs, channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactMask {
    pub channels: Vec<String>,
    pub mask: Array2<bool>,
    pub alpha_excluded: Array2<bool>,
    pub scores: Array2<f64>,
    pub bad_channels: Vec<String>,
    pub alpha_threshold: Option<f64>,
    pub warnings: Vec<String>,
}

impl ArtifactMask {
    pub fn empty(channels: &[String], n_epochs: usize) -> Self {
        let c = channels.len();
        ArtifactMask {
            channels: channels.to_vec(),
            mask: Array2::from_elem((n_epochs, c), false),
            alpha_excluded: Array2::from_elem((n_epochs, c), false),
            scores: Array2::zeros((n_epochs, c)),
            bad_channels: Vec::new(),
            alpha_threshold: None,
            warnings: Vec::new(),
        }
    }

    pub fn n_flagged(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// `epoch_index,channel,flag` rows for every epoch-channel.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch_index,channel,flag\n");
        for ((e, c), &f) in self.mask.indexed_iter() {
            out.push_str(&format!("{e},{},{}\n", self.channels[c], u8::from(f)));
        }
        out
    }
}

/// Channels whose contaminated fraction over the included epochs exceeds
/// `fraction`.
pub fn bad_channels_from(
    mask: &Array2<bool>,
    include: &[bool],
    channels: &[String],
    fraction: f64,
) -> Vec<String> {
    let n_inc = include.iter().filter(|&&b| b).count();
    if n_inc == 0 {
        return Vec::new();
    }
    channels
        .iter()
        .enumerate()
        .filter(|&(c, _)| {
            let hits = (0..mask.nrows())
                .filter(|&e| include[e] && mask[[e, c]])
                .count();
            hits as f64 / n_inc as f64 > fraction
        })
        .map(|(_, l)| l.clone())
        .collect()
}

/// Linear-interpolation percentile (`p` in 0..=100).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Features of every (epoch, channel), `None` for excluded epochs.
pub fn epoch_features(
    es: &EpochSet,
    mt: &MultitaperConfig,
) -> Result<Vec<Option<Vec<EpochChannelFeatures>>>> {
    let c = es.n_channels();
    let flat = par::map_range(es.n_epochs() * c, |i| {
        let (e, ch) = (i / c, i % c);
        if !es.include_mask[e] {
            return Ok(None);
        }
        let row = es.epochs.slice(s![e, ch, ..]);
        let x: Vec<f64> = row.iter().copied().collect();
        extract_features(&x, es.fs, mt).map(Some)
    });
    let flat: Vec<Option<EpochChannelFeatures>> = flat.into_iter().collect::<Result<_>>()?;
    Ok(flat
        .chunks(c)
        .map(|chunk| {
            if chunk[0].is_none() {
                None
            } else {
                Some(chunk.iter().map(|f| f.clone().unwrap()).collect())
            }
        })
        .collect())
}

pub fn detect(
    es: &EpochSet,
    montage: &MontageMap,
    cfg: &ArtifactConfig,
    mt: &MultitaperConfig,
) -> Result<ArtifactMask> {
    let n = es.n_epochs();
    let c = es.n_channels();
    let mut out = ArtifactMask::empty(&es.channels, n);
    let included = es.included_indices();
    if included.len() < cfg.min_epochs {
        let msg = format!(
            "artifact detection skipped: {} usable epochs (< {})",
            included.len(),
            cfg.min_epochs
        );
        warn!("{msg}");
        out.warnings.push(msg);
        return Ok(out);
    }
    let neighbors: Vec<Vec<usize>> = es
        .channels
        .iter()
        .map(|l| montage.neighbors(l).filter_map(|nb| es.channels.iter().position(|x| x == nb)).collect())
        .collect();
    if neighbors.iter().any(Vec::is_empty) {
        return Err(Error::InvalidParameter(
            "every channel needs at least one montage neighbor".into(),
        ));
    }

    let feats = epoch_features(es, mt)?;

    // (1) alpha exemption
    let alpha: Vec<f64> = included
        .iter()
        .flat_map(|&e| feats[e].as_ref().unwrap().iter().map(|f| f.values[ABS_ALPHA]))
        .collect();
    let mean_alpha = alpha.iter().sum::<f64>() / alpha.len() as f64;
    let alpha_thr = 0.5 * (mean_alpha + median(&alpha));
    out.alpha_threshold = Some(alpha_thr);
    for &e in &included {
        for (ch, f) in feats[e].as_ref().unwrap().iter().enumerate() {
            out.alpha_excluded[[e, ch]] = f.values[ABS_ALPHA] > alpha_thr;
        }
    }

    // (2) per-epoch HBOS across channels
    let epoch_scores = par::map_slice(&included, |&e| {
        let fs = feats[e].as_ref().unwrap();
        let refs: Vec<&[f64]> = fs.iter().map(|f| &f.values[..]).collect();
        hbos_score(&refs, cfg.density_floor)
    });
    for (&e, sc) in included.iter().zip(&epoch_scores) {
        for ch in 0..c {
            out.scores[[e, ch]] = sc[ch];
        }
    }
    let eligible: Vec<f64> = included
        .iter()
        .flat_map(|&e| (0..c).map(move |ch| (e, ch)))
        .filter(|&(e, ch)| !out.alpha_excluded[[e, ch]])
        .map(|(e, ch)| out.scores[[e, ch]])
        .collect();
    if eligible.is_empty() {
        return Ok(out);
    }
    let cand_thr = percentile(&eligible, cfg.candidate_percentile);
    let nb_thr = percentile(&eligible, cfg.neighbor_percentile);
    let med = median(&eligible);
    let mad = median(&eligible.iter().map(|s| (s - med).abs()).collect::<Vec<_>>());
    let robust_thr = med + cfg.robust_z * 1.4826 * mad;

    // (3) neighbor comparison
    for &e in &included {
        for ch in 0..c {
            if out.alpha_excluded[[e, ch]] {
                continue;
            }
            let score = out.scores[[e, ch]];
            if !(score > cand_thr && (cfg.robust_z <= 0.0 || score > robust_thr)) {
                continue;
            }
            let nb: Vec<f64> = neighbors[ch].iter().map(|&j| out.scores[[e, j]]).collect();
            if median(&nb) < nb_thr {
                out.mask[[e, ch]] = true;
            }
        }
    }

    // (4) bad channels
    out.bad_channels =
        bad_channels_from(&out.mask, &es.include_mask, &es.channels, cfg.bad_channel_fraction);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub epochs: EpochSet,
    /// Entries that stayed contaminated because every neighbor was too.
    pub unrepaired: Array2<bool>,
}

/// Replaces each contaminated epoch-channel by the samplewise mean of its
/// uncontaminated neighbors.
pub fn repair_epochs(es: &EpochSet, mask: &ArtifactMask, montage: &MontageMap) -> Result<RepairOutcome> {
    let n = es.n_epochs();
    let c = es.n_channels();
    if mask.mask.dim() != (n, c) {
        return Err(Error::Dimension(format!(
            "mask is {:?}, epochs are ({n}, {c})",
            mask.mask.dim()
        )));
    }
    let neighbors: Vec<Vec<usize>> = es
        .channels
        .iter()
        .map(|l| montage.neighbors(l).filter_map(|nb| es.channels.iter().position(|x| x == nb)).collect())
        .collect();
    let mut epochs = es.epochs.clone();
    let mut unrepaired = Array2::from_elem((n, c), false);
    for ((e, ch), &flag) in mask.mask.indexed_iter() {
        if !flag {
            continue;
        }
        let clean: Vec<usize> = neighbors[ch]
            .iter()
            .copied()
            .filter(|&j| !mask.mask[[e, j]])
            .collect();
        if clean.is_empty() {
            unrepaired[[e, ch]] = true;
            continue;
        }
        let src = es.epochs.index_axis(Axis(0), e);
        let mut dst = epochs.slice_mut(s![e, ch, ..]);
        dst.fill(0.0);
        for &j in &clean {
            dst += &src.row(j);
        }
        dst.mapv_inplace(|v| v / clean.len() as f64);
    }
    Ok(RepairOutcome {
        epochs: EpochSet {
            epochs,
            ..es.clone()
        },
        unrepaired,
    })
}

/// Repairs a continuous recording epoch by epoch; samples after the last
/// whole epoch are left untouched.
pub fn repair(
    rec: &Recording,
    epoch_len_s: f64,
    mask: &ArtifactMask,
    montage: &MontageMap,
) -> Result<Recording> {
    let es = segment_epochs(rec, epoch_len_s)?;
    let fixed = repair_epochs(&es, mask, montage)?.epochs.to_recording();
    let mut data = rec.data.clone();
    let n = fixed.n_samples();
    data.slice_mut(s![.., ..n]).assign(&fixed.data);
    Ok(Recording {
        data,
        ..rec.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_matches_linear_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert_eq!(percentile(&v, 75.0), 4.0);
        assert!((percentile(&v, 95.0) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn bad_channel_rule_is_strict() {
        let chans: Vec<String> = vec!["A".into(), "B".into()];
        let mut m = Array2::from_elem((10, 2), false);
        for e in 0..3 {
            m[[e, 0]] = true;
        }
        for e in 0..4 {
            m[[e, 1]] = true;
        }
        let bad = bad_channels_from(&m, &[true; 10], &chans, 0.30);
        assert_eq!(bad, vec!["B".to_string()]);
    }
}
