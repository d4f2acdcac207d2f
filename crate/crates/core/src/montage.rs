//! The 19-channel 10-20 analysis montage: canonical order, aliases,
//! hemisphere membership, mirror pairs and the neighbor graph used by
//! artifact repair and the focal-slowing rule.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Canonical analysis order.
pub const ANALYSIS_CHANNELS: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz",
    "P4", "T6", "O1", "O2",
];

/// (left, right) mirror pairs.
pub const MIRROR_PAIRS: [(&str, &str); 8] = [
    ("Fp1", "Fp2"),
    ("F7", "F8"),
    ("F3", "F4"),
    ("T3", "T4"),
    ("C3", "C4"),
    ("T5", "T6"),
    ("P3", "P4"),
    ("O1", "O2"),
];

/// The 14 lateral electrodes scored by the asymmetry and focal-slowing
/// rules, right hemisphere first.
pub const SCORED_ELECTRODES: [&str; 14] = [
    "F8", "F4", "C4", "T4", "T6", "P4", "O2", "F7", "F3", "C3", "T3", "T5", "P3", "O1",
];

pub const ANTERIOR: [&str; 6] = ["Fp1", "Fp2", "F7", "F8", "F3", "F4"];
pub const POSTERIOR: [&str; 6] = ["T5", "T6", "P3", "P4", "O1", "O2"];

/// Older/newer 10-20 nomenclature.
const ALIASES: [(&str, &str); 4] = [("T7", "T3"), ("T8", "T4"), ("P7", "T5"), ("P8", "T6")];

/// Undirected neighbor edges. Lateral electrodes link only within their
/// hemisphere (F3: Fp1, F7, C3); the midline chain Fz-Cz-Pz links to the
/// frontal poles and occipital electrodes.
const EDGES: [(&str, &str); 28] = [
    ("Fp1", "F7"),
    ("Fp1", "F3"),
    ("Fp1", "Fz"),
    ("Fp2", "F8"),
    ("Fp2", "F4"),
    ("Fp2", "Fz"),
    ("F7", "F3"),
    ("F8", "F4"),
    ("F7", "T3"),
    ("F8", "T4"),
    ("F3", "C3"),
    ("F4", "C4"),
    ("T3", "C3"),
    ("T4", "C4"),
    ("T3", "T5"),
    ("T4", "T6"),
    ("C3", "P3"),
    ("C4", "P4"),
    ("T5", "P3"),
    ("T6", "P4"),
    ("T5", "O1"),
    ("T6", "O2"),
    ("P3", "O1"),
    ("P4", "O2"),
    ("Fz", "Cz"),
    ("Cz", "Pz"),
    ("Pz", "O1"),
    ("Pz", "O2"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    Left,
    Right,
    Midline,
}

#[derive(Debug, Clone)]
pub struct MontageMap {
    pub analysis_channels: Vec<String>,
    pub adjacency: BTreeMap<String, BTreeSet<String>>,
    pub hemisphere: BTreeMap<String, Hemisphere>,
}

impl Default for MontageMap {
    fn default() -> Self {
        Self::standard_10_20()
    }
}

impl MontageMap {
    pub fn standard_10_20() -> Self {
        let analysis_channels: Vec<String> =
            ANALYSIS_CHANNELS.iter().map(|s| s.to_string()).collect();
        let mut adjacency: BTreeMap<String, BTreeSet<String>> = analysis_channels
            .iter()
            .map(|c| (c.clone(), BTreeSet::new()))
            .collect();
        for (a, b) in EDGES {
            adjacency.get_mut(a).unwrap().insert(b.to_string());
            adjacency.get_mut(b).unwrap().insert(a.to_string());
        }
        let hemisphere = analysis_channels
            .iter()
            .map(|c| (c.clone(), hemisphere_of(c)))
            .collect();
        MontageMap {
            analysis_channels,
            adjacency,
            hemisphere,
        }
    }

    pub fn len(&self) -> usize {
        self.analysis_channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.analysis_channels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.analysis_channels.iter().position(|c| c == label)
    }

    pub fn neighbors(&self, label: &str) -> impl Iterator<Item = &str> {
        self.adjacency
            .get(label)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    /// Neighbor indices for every analysis channel, in analysis order.
    pub fn neighbor_indices(&self) -> Vec<Vec<usize>> {
        self.analysis_channels
            .iter()
            .map(|c| {
                self.neighbors(c)
                    .filter_map(|n| self.index_of(n))
                    .collect()
            })
            .collect()
    }

    pub fn mirror_of(&self, label: &str) -> Option<&'static str> {
        MIRROR_PAIRS.iter().find_map(|&(l, r)| {
            if l == label {
                Some(r)
            } else if r == label {
                Some(l)
            } else {
                None
            }
        })
    }

    pub fn channels_in(&self, hemi: Hemisphere) -> Vec<&str> {
        self.analysis_channels
            .iter()
            .filter(|c| self.hemisphere[*c] == hemi)
            .map(String::as_str)
            .collect()
    }
}

/// Hemisphere from the 10-20 digit convention: odd = left, even = right,
/// `z` = midline.
pub fn hemisphere_of(label: &str) -> Hemisphere {
    match label.chars().last() {
        Some('z') | Some('Z') => Hemisphere::Midline,
        Some(c) if c.is_ascii_digit() => {
            if c.to_digit(10).unwrap() % 2 == 1 {
                Hemisphere::Left
            } else {
                Hemisphere::Right
            }
        }
        _ => Hemisphere::Midline,
    }
}

/// Maps a raw EDF label onto its canonical 10-20 spelling, e.g.
/// `"EEG T7-REF"` → `"T3"`, `"fp1"` → `"Fp1"`. Labels that are not 10-20
/// scalp sites are returned trimmed but otherwise unchanged.
pub fn canonical_label(raw: &str) -> String {
    let mut s = raw.trim();
    for prefix in ["EEG ", "EEG-", "eeg "] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest.trim();
        }
    }
    let upper = s.to_ascii_uppercase();
    let mut core = upper.as_str();
    for suffix in ["-REF", "-LE", "-AR", "-AVG", "-A1", "-A2", "-CZ", "-FPZ"] {
        if let Some(rest) = core.strip_suffix(suffix) {
            core = rest;
            break;
        }
    }
    let core = core.trim();
    for (alias, canon) in ALIASES {
        if core == alias.to_ascii_uppercase() {
            return canon.to_string();
        }
    }
    for known in ANALYSIS_CHANNELS
        .iter()
        .chain(["Fpz", "A1", "A2", "Oz"].iter())
    {
        if core == known.to_ascii_uppercase() {
            return known.to_string();
        }
    }
    s.to_string()
}
