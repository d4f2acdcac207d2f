//! Rule-based background interpretation: generalized slowing, asymmetry
//! (PDR difference or alpha amplitude score) and focal slow waves.
//!
//! All thresholds are strict inequalities.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::montage::{hemisphere_of, Hemisphere, MontageMap, SCORED_ELECTRODES};
use crate::spectral::{Band, BackgroundFeatures, LrBandRatio, PairRatio, PdrEstimate};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Both PDRs below this → slowing.
    pub gbs_pdr_hz: f64,
    /// Both PDRs below this and slow ratio above `slow_ratio_pct` → slowing.
    pub gbs_pdr_with_slow_hz: f64,
    pub slow_ratio_pct: f64,
    /// |left-right ratio| that counts toward a score.
    pub lr_ratio: f64,
    pub pdr_diff_hz: f64,
    pub focal_score: f64,
    pub alpha_score: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            gbs_pdr_hz: 7.5,
            gbs_pdr_with_slow_hz: 8.0,
            slow_ratio_pct: 50.0,
            lr_ratio: 0.5,
            pdr_diff_hz: 1.0,
            focal_score: 2.4,
            alpha_score: 1.6,
        }
    }
}

pub fn detect_gbs(pdr: Option<PdrEstimate>, slow_ratio_total: f64, th: &Thresholds) -> Result<bool> {
    let p = pdr.ok_or_else(|| Error::InvalidParameter("slowing rule needs a PDR estimate".into()))?;
    let below = |lim: f64| p.left < lim && p.right < lim;
    Ok(below(th.gbs_pdr_hz) || (below(th.gbs_pdr_with_slow_hz) && slow_ratio_total > th.slow_ratio_pct))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaScore {
    pub left: f64,
    pub right: f64,
    pub asymmetric: bool,
    /// Weaker member of each qualifying pair, in scored-electrode order.
    pub lower_electrodes: Vec<String>,
}

/// Score sums are snapped to 1e-9 so that summation order cannot push a
/// decimal total such as 0.9 + 0.8 + 0.7 across a threshold it equals.
fn snap(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn scored(label: &str) -> bool {
    SCORED_ELECTRODES.contains(&label)
}

/// Alpha amplitude score over mirror pairs. Each pair contributes once;
/// pairs touching an artifact electrode are skipped. Positive ratios
/// (left stronger) add to the left score.
pub fn alpha_amplitude_score(pairs: &[PairRatio], artifacts: &BTreeSet<String>, th: &Thresholds) -> AlphaScore {
    let (mut left, mut right) = (0.0, 0.0);
    let mut lower = BTreeSet::new();
    for p in pairs {
        if artifacts.contains(&p.left) || artifacts.contains(&p.right) {
            continue;
        }
        if p.value.abs() > th.lr_ratio {
            if p.value > 0.0 {
                left += p.value.abs();
                lower.insert(p.right.clone());
            } else {
                right += p.value.abs();
                lower.insert(p.left.clone());
            }
        }
    }
    let (left, right) = (snap(left), snap(right));
    AlphaScore {
        left,
        right,
        asymmetric: left > th.alpha_score || right > th.alpha_score,
        lower_electrodes: order_like_scored(&lower),
    }
}

fn order_like_scored(set: &BTreeSet<String>) -> Vec<String> {
    let mut out: Vec<String> = SCORED_ELECTRODES
        .iter()
        .filter(|e| set.contains(**e))
        .map(|e| e.to_string())
        .collect();
    out.extend(set.iter().filter(|e| !scored(e)).cloned());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymmetryReason {
    PdrDiff,
    Amplitude,
}

pub fn detect_asymmetry(pdr: PdrEstimate, alpha: &AlphaScore, th: &Thresholds) -> (bool, Option<AsymmetryReason>) {
    if (pdr.left - pdr.right).abs() > th.pdr_diff_hz {
        (true, Some(AsymmetryReason::PdrDiff))
    } else if alpha.asymmetric {
        (true, Some(AsymmetryReason::Amplitude))
    } else {
        (false, None)
    }
}

/// Per-electrode `[theta, delta]` ratios from pair ratios. A pair's value is
/// attributed to its dominant member: positive to the left electrode,
/// negative to the right one; the other member gets 0.
pub fn electrode_ratios(theta: &LrBandRatio, delta: &LrBandRatio) -> BTreeMap<String, [f64; 2]> {
    let mut out: BTreeMap<String, [f64; 2]> = BTreeMap::new();
    for (k, band) in [theta, delta].into_iter().enumerate() {
        for p in &band.pairs {
            if !scored(&p.left) || !scored(&p.right) {
                continue;
            }
            out.entry(p.left.clone()).or_default();
            out.entry(p.right.clone()).or_default();
            let target = if p.value > 0.0 { &p.left } else { &p.right };
            out.get_mut(target).unwrap()[k] = p.value;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalResult {
    pub left: f64,
    pub right: f64,
    /// Abnormal electrodes in scored-electrode order.
    pub electrodes: Vec<String>,
    pub focal: bool,
}

/// Focal slow-wave rule. An electrode is abnormal when one of its band
/// ratios exceeds the limit and so does one of a non-artifact neighbor's.
pub fn focal_slow(
    ratios: &BTreeMap<String, [f64; 2]>,
    artifacts: &BTreeSet<String>,
    montage: &MontageMap,
    th: &Thresholds,
) -> FocalResult {
    let hot = |label: &str| {
        !artifacts.contains(label)
            && ratios
                .get(label)
                .is_some_and(|r| r.iter().any(|v| v.abs() > th.lr_ratio))
    };
    let mut abnormal = BTreeSet::new();
    for label in ratios.keys() {
        if hot(label) && montage.neighbors(label).any(hot) {
            abnormal.insert(label.clone());
        }
    }
    let (mut left, mut right) = (0.0, 0.0);
    for label in &abnormal {
        for &v in &ratios[label] {
            if v.abs() > th.lr_ratio {
                if v > 0.0 {
                    left += v.abs();
                } else {
                    right += v.abs();
                }
            }
        }
    }
    let (left, right) = (snap(left), snap(right));
    FocalResult {
        left,
        right,
        electrodes: order_like_scored(&abnormal),
        focal: left > th.focal_score || right > th.focal_score,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub alpha_left: f64,
    pub alpha_right: f64,
    pub focal_left: f64,
    pub focal_right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbnormalityFindings {
    pub gbs: bool,
    pub asymmetry: bool,
    pub asymmetry_reason: Option<AsymmetryReason>,
    /// Set independently of the reason label, which prefers the PDR rule.
    pub pdr_asymmetry: bool,
    pub amplitude_asymmetry: bool,
    pub focal_slow: bool,
    pub focal_electrodes: Vec<String>,
    pub lower_alpha_electrodes: Vec<String>,
    pub scores: Scores,
    pub pdr: PdrEstimate,
    pub slow_ratio_total: f64,
    pub thresholds_used: Thresholds,
}

impl AbnormalityFindings {
    pub fn is_normal(&self) -> bool {
        !self.gbs && !self.asymmetry && !self.focal_slow
    }
}

pub fn assemble_findings(
    gbs: bool,
    pdr: PdrEstimate,
    slow_ratio_total: f64,
    alpha: &AlphaScore,
    focal: &FocalResult,
    th: &Thresholds,
) -> AbnormalityFindings {
    let (asymmetry, asymmetry_reason) = detect_asymmetry(pdr, alpha, th);
    AbnormalityFindings {
        gbs,
        asymmetry,
        asymmetry_reason,
        pdr_asymmetry: (pdr.left - pdr.right).abs() > th.pdr_diff_hz,
        amplitude_asymmetry: alpha.asymmetric,
        focal_slow: focal.focal,
        focal_electrodes: if focal.focal { focal.electrodes.clone() } else { Vec::new() },
        lower_alpha_electrodes: if alpha.asymmetric { alpha.lower_electrodes.clone() } else { Vec::new() },
        scores: Scores {
            alpha_left: alpha.left,
            alpha_right: alpha.right,
            focal_left: focal.left,
            focal_right: focal.right,
        },
        pdr,
        slow_ratio_total,
        thresholds_used: *th,
    }
}

/// Runs every rule on recording-level features. Bad channels count as
/// artifact electrodes.
pub fn interpret(features: &BackgroundFeatures, montage: &MontageMap, th: &Thresholds) -> Result<AbnormalityFindings> {
    let pdr = features
        .pdr
        .ok_or_else(|| Error::InvalidParameter("PDR has not been estimated".into()))?;
    let artifacts: BTreeSet<String> = features.bad_channels.iter().cloned().collect();
    let band = |b: Band| {
        features
            .lr_ratio
            .get(&b)
            .ok_or_else(|| Error::InvalidParameter(format!("missing {b:?} left-right ratio")))
    };
    let gbs = detect_gbs(Some(pdr), features.slow_ratio.total, th)?;
    let alpha_pairs: Vec<PairRatio> = band(Band::Alpha)?
        .pairs
        .iter()
        .filter(|p| scored(&p.left) && scored(&p.right))
        .cloned()
        .collect();
    let alpha = alpha_amplitude_score(&alpha_pairs, &artifacts, th);
    // a bad electrode also spoils its mirror's ratio
    let mut focal_artifacts = artifacts.clone();
    for a in &artifacts {
        if let Some(m) = montage.mirror_of(a) {
            focal_artifacts.insert(m.to_string());
        }
    }
    let ratios = electrode_ratios(band(Band::Theta)?, band(Band::Delta)?);
    let focal = focal_slow(&ratios, &focal_artifacts, montage, th);
    Ok(assemble_findings(gbs, pdr, features.slow_ratio.total, &alpha, &focal, th))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Lobe {
    Frontal,
    Central,
    Temporal,
    Parietal,
    Occipital,
}

impl Lobe {
    fn combining(self) -> &'static str {
        match self {
            Lobe::Frontal => "fronto",
            Lobe::Central => "centro",
            Lobe::Temporal => "temporo",
            Lobe::Parietal => "parieto",
            Lobe::Occipital => "occipito",
        }
    }

    fn adjective(self) -> &'static str {
        match self {
            Lobe::Frontal => "frontal",
            Lobe::Central => "central",
            Lobe::Temporal => "temporal",
            Lobe::Parietal => "parietal",
            Lobe::Occipital => "occipital",
        }
    }
}

fn lobes_of(label: &str) -> &'static [Lobe] {
    match label {
        "Fp1" | "Fp2" | "F3" | "F4" | "Fz" => &[Lobe::Frontal],
        "F7" | "F8" => &[Lobe::Frontal, Lobe::Temporal],
        "C3" | "C4" | "Cz" => &[Lobe::Central],
        "T3" | "T4" | "T5" | "T6" => &[Lobe::Temporal],
        "P3" | "P4" | "Pz" => &[Lobe::Parietal],
        "O1" | "O2" => &[Lobe::Occipital],
        _ => &[],
    }
}

/// Region phrase for a set of electrodes, e.g. F8, F4 → "right frontotemporal region".
pub fn region_phrase<S: AsRef<str>>(electrodes: &[S]) -> String {
    let hemis: BTreeSet<Hemisphere> = electrodes.iter().map(|e| hemisphere_of(e.as_ref())).collect();
    let side = match (hemis.contains(&Hemisphere::Left), hemis.contains(&Hemisphere::Right)) {
        (true, false) => "left",
        (false, true) => "right",
        (true, true) => "bilateral",
        (false, false) => "midline",
    };
    let lobes: BTreeSet<Lobe> = electrodes.iter().flat_map(|e| lobes_of(e.as_ref()).iter().copied()).collect();
    if lobes.is_empty() || lobes.len() > 3 {
        return if side == "bilateral" || side == "midline" {
            "diffuse distribution".to_string()
        } else {
            format!("{side} hemisphere")
        };
    }
    let lobes: Vec<Lobe> = lobes.into_iter().collect();
    let mut name = String::new();
    for (i, l) in lobes.iter().enumerate() {
        let part = if i + 1 == lobes.len() { l.adjective() } else { l.combining() };
        if i > 0 && part.starts_with(['a', 'e', 'i', 'o', 'u']) {
            name.push('-');
        }
        name.push_str(part);
    }
    format!("{side} {name} region")
}
