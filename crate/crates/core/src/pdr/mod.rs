//! Posterior dominant rhythm (PDR) estimation.
//!
//! Posterior spectra are packed into a 6×48 map (3.00–14.75 Hz at 0.25 Hz,
//! one row per electrode, the measured side first) and regressed onto a
//! unit label `(hz - 4) / 8` by a small CNN. A spectral-peak estimate is
//! available as a model-free baseline.

pub mod cnn;
pub mod io;
pub mod split;
pub mod synthetic;
pub mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::spectral::{PsdTable, GRID_STEP_HZ};
use crate::{Error, Result};

pub use cnn::{Cnn, CnnArch};
pub use split::{kfold_grouped, split_grouped};
pub use train::{train, train_ensemble, TrainConfig};

pub const MAP_ROWS: usize = 6;
pub const MAP_BINS: usize = 48;
pub const MAP_FMIN_HZ: f64 = 3.0;
pub const LABEL_MIN_HZ: f64 = 4.0;
pub const LABEL_MAX_HZ: f64 = 12.0;

pub const RIGHT_ORDER: [&str; 6] = ["T6", "O2", "P4", "T5", "O1", "P3"];
pub const LEFT_ORDER: [&str; 6] = ["T5", "O1", "P3", "T6", "O2", "P4"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn electrode_order(self) -> [&'static str; 6] {
        match self {
            Side::Left => LEFT_ORDER,
            Side::Right => RIGHT_ORDER,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Side::Left),
            "right" | "r" => Ok(Side::Right),
            other => Err(Error::InvalidParameter(format!("unknown side `{other}`"))),
        }
    }
}

/// Frequency of map column `j`.
pub fn map_freq(j: usize) -> f64 {
    MAP_FMIN_HZ + j as f64 * GRID_STEP_HZ
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdrFeatureMap {
    /// `[6, 48]`, max-normalized into [0, 1].
    pub values: Array2<f64>,
    pub side: Side,
    pub electrode_order: Vec<String>,
}

impl PdrFeatureMap {
    /// Wraps raw values, normalizing by the maximum.
    pub fn from_values(values: Array2<f64>, side: Side) -> Result<Self> {
        if values.dim() != (MAP_ROWS, MAP_BINS) {
            return Err(Error::Dimension(format!(
                "feature map must be {MAP_ROWS}x{MAP_BINS}, got {:?}",
                values.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("feature map values must be finite and non-negative".into()));
        }
        let max = values.iter().fold(0.0f64, |m, &v| m.max(v));
        let values = if max > 0.0 { values / max } else { values };
        Ok(PdrFeatureMap {
            values,
            side,
            electrode_order: side.electrode_order().iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Packs the posterior spectra of `psd` for one side.
pub fn build_feature_map(psd: &PsdTable, side: Side) -> Result<PdrFeatureMap> {
    let start = psd
        .freqs
        .iter()
        .position(|&f| (f - MAP_FMIN_HZ).abs() < 1e-9)
        .ok_or_else(|| Error::InvalidParameter("PSD grid does not contain 3.00 Hz".into()))?;
    if start + MAP_BINS > psd.freqs.len()
        || (psd.freqs[start + MAP_BINS - 1] - map_freq(MAP_BINS - 1)).abs() > 1e-9
    {
        return Err(Error::InvalidParameter(
            "PSD grid must cover 3.00–14.75 Hz at 0.25 Hz".into(),
        ));
    }
    let order = side.electrode_order();
    let missing: Vec<String> = order
        .iter()
        .filter(|l| psd.channel_index(l).is_none())
        .map(|l| l.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingChannels(missing));
    }
    let mut values = Array2::zeros((MAP_ROWS, MAP_BINS));
    for (r, label) in order.iter().enumerate() {
        let c = psd.channel_index(label).unwrap();
        for j in 0..MAP_BINS {
            values[[r, j]] = psd.power[[c, start + j]];
        }
    }
    PdrFeatureMap::from_values(values, side)
}

pub fn normalize_label(hz: f64) -> Result<f64> {
    if !(LABEL_MIN_HZ..=LABEL_MAX_HZ).contains(&hz) {
        return Err(Error::InvalidParameter(format!(
            "PDR label {hz} Hz outside [4, 12]"
        )));
    }
    Ok((hz - LABEL_MIN_HZ) / (LABEL_MAX_HZ - LABEL_MIN_HZ))
}

pub fn denormalize_label(unit: f64) -> f64 {
    (LABEL_MAX_HZ - LABEL_MIN_HZ) * unit + LABEL_MIN_HZ
}

/// Mean over rows of the power-weighted centroid around each row's peak.
///
/// The argmax takes the lowest frequency on ties. A peak on the first or last
/// column is taken as is. The mean is clamped to [4, 12].
pub fn spectral_peak_baseline(map: &PdrFeatureMap) -> f64 {
    let mut sum = 0.0;
    for row in map.values.rows() {
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        let est = if best == 0 || best + 1 == row.len() {
            map_freq(best)
        } else {
            let w: f64 = (best - 1..=best + 1).map(|j| row[j]).sum();
            if w > 0.0 {
                (best - 1..=best + 1).map(|j| row[j] * map_freq(j)).sum::<f64>() / w
            } else {
                map_freq(best)
            }
        };
        sum += est;
    }
    (sum / map.values.nrows() as f64).clamp(LABEL_MIN_HZ, LABEL_MAX_HZ)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: PdrFeatureMap,
    pub label_hz: f64,
    pub group_key: String,
}

impl LabeledExample {
    pub fn new(features: PdrFeatureMap, label_hz: f64, group_key: impl Into<String>) -> Result<Self> {
        normalize_label(label_hz)?;
        let group_key = group_key.into();
        if group_key.is_empty() {
            return Err(Error::InvalidParameter("empty group key".into()));
        }
        Ok(LabeledExample { features, label_hz, group_key })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    /// Validation MAE in Hz per epoch, empty without a validation set.
    pub val_mae: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PdrModel {
    pub cnn: Cnn<f32>,
    pub seed: u64,
    pub meta: TrainingMeta,
}

impl PdrModel {
    pub fn predict(&self, map: &PdrFeatureMap) -> f64 {
        self.predict_many(std::slice::from_ref(map))[0]
    }

    pub fn predict_many(&self, maps: &[PdrFeatureMap]) -> Vec<f64> {
        let mut out = Vec::with_capacity(maps.len());
        for chunk in maps.chunks(64) {
            let input: Vec<f32> = chunk.iter().flat_map(|m| m.to_f32()).collect();
            out.extend(
                self.cnn
                    .predict_unit(&input, chunk.len())
                    .into_iter()
                    .map(|u| denormalize_label(u as f64)),
            );
        }
        out
    }
}

/// Members combined by the arithmetic mean of their predictions.
#[derive(Debug, Clone)]
pub struct PdrEnsemble {
    pub members: Vec<PdrModel>,
}

impl PdrEnsemble {
    pub fn predict(&self, map: &PdrFeatureMap) -> f64 {
        self.predict_many(std::slice::from_ref(map))[0]
    }

    pub fn member_predictions(&self, maps: &[PdrFeatureMap]) -> Vec<Vec<f64>> {
        self.members.iter().map(|m| m.predict_many(maps)).collect()
    }

    pub fn predict_many(&self, maps: &[PdrFeatureMap]) -> Vec<f64> {
        let per = self.member_predictions(maps);
        (0..maps.len())
            .map(|i| per.iter().map(|p| p[i]).sum::<f64>() / per.len() as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdrMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub acc06: f64,
    pub acc12: f64,
    pub n: usize,
}

pub fn pdr_metrics(pred_hz: &[f64], label_hz: &[f64]) -> Result<PdrMetrics> {
    if pred_hz.len() != label_hz.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            pred_hz.len(),
            label_hz.len()
        )));
    }
    if pred_hz.is_empty() {
        return Err(Error::InvalidParameter("no predictions to score".into()));
    }
    let n = pred_hz.len() as f64;
    let err: Vec<f64> = pred_hz.iter().zip(label_hz).map(|(p, l)| p - l).collect();
    let mae = err.iter().map(|e| e.abs()).sum::<f64>() / n;
    let sse: f64 = err.iter().map(|e| e * e).sum();
    let rmse = (sse / n).sqrt();
    let mean = label_hz.iter().sum::<f64>() / n;
    let sst: f64 = label_hz.iter().map(|l| (l - mean) * (l - mean)).sum();
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    let frac = |tol: f64| err.iter().filter(|e| e.abs() < tol).count() as f64 / n;
    Ok(PdrMetrics { mae, rmse, r2, acc06: frac(0.6), acc12: frac(1.2), n: pred_hz.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montage::ANALYSIS_CHANNELS;

    fn psd_with(f: impl Fn(&str, f64) -> f64) -> PsdTable {
        let freqs: Vec<f64> = (0..=120).map(|i| i as f64 * 0.25).collect();
        let channels: Vec<String> = ANALYSIS_CHANNELS.iter().map(|s| s.to_string()).collect();
        let power = Array2::from_shape_fn((channels.len(), freqs.len()), |(c, j)| {
            f(&channels[c], freqs[j])
        });
        PsdTable { channels, freqs, power, n_tapers: 7 }
    }

    fn bump_map(center: f64) -> PdrFeatureMap {
        let v = Array2::from_shape_fn((6, 48), |(_, j)| {
            let d = map_freq(j) - center;
            (-d * d / (2.0 * 0.5 * 0.5)).exp()
        });
        PdrFeatureMap::from_values(v, Side::Right).unwrap()
    }

    #[test]
    fn right_map_starts_with_t6() {
        let psd = psd_with(|ch, f| if ch == "T6" { 2.0 + f } else { 1.0 });
        let map = build_feature_map(&psd, Side::Right).unwrap();
        assert_eq!(map.electrode_order[0], "T6");
        assert_eq!(map.values[[0, 47]], 1.0);
        assert!(map.values.row(1).iter().all(|&v| v < 0.3));
    }

    #[test]
    fn flat_psd_normalizes_to_one() {
        let psd = psd_with(|_, _| 3.5);
        let map = build_feature_map(&psd, Side::Left).unwrap();
        assert!(map.values.iter().all(|&v| v == 1.0));
        let zero = build_feature_map(&psd_with(|_, _| 0.0), Side::Left).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn left_map_of_mirror_equals_right_map() {
        let psd = psd_with(|ch, f| {
            let k = ch.bytes().map(|b| b as f64).sum::<f64>();
            1.0 + (k * 0.1 + f).sin().abs()
        });
        let mirror = |label: &str| -> String {
            crate::montage::MIRROR_PAIRS
                .iter()
                .find_map(|&(l, r)| {
                    if l == label {
                        Some(r.to_string())
                    } else if r == label {
                        Some(l.to_string())
                    } else {
                        None
                    }
                })
                .unwrap_or_else(|| label.to_string())
        };
        let mut mirrored = psd.clone();
        mirrored.channels = psd.channels.iter().map(|c| mirror(c)).collect();
        let a = build_feature_map(&psd, Side::Right).unwrap();
        let b = build_feature_map(&mirrored, Side::Left).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn missing_posterior_electrode_is_reported() {
        let mut psd = psd_with(|_, _| 1.0);
        let i = psd.channel_index("O1").unwrap();
        psd.channels[i] = "X1".into();
        match build_feature_map(&psd, Side::Left) {
            Err(Error::MissingChannels(m)) => assert_eq!(m, vec!["O1".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let mut psd = psd_with(|_, _| 1.0);
        psd = psd.restrict(1.5, 12.0).unwrap();
        assert!(build_feature_map(&psd, Side::Left).is_err());
    }

    #[test]
    fn label_scaling() {
        assert_eq!(normalize_label(4.0).unwrap(), 0.0);
        assert_eq!(normalize_label(12.0).unwrap(), 1.0);
        assert_eq!(normalize_label(8.0).unwrap(), 0.5);
        assert!(normalize_label(12.5).is_err());
        assert!(normalize_label(3.9).is_err());
        for k in 0..17 {
            let hz = 4.0 + 0.5 * k as f64;
            assert_eq!(denormalize_label(normalize_label(hz).unwrap()), hz);
        }
        assert_eq!(denormalize_label(0.5), 8.0);
    }

    #[test]
    fn baseline_recovers_bump_center() {
        // symmetric bump on a bin: centroid of the three central bins is exact
        assert!((spectral_peak_baseline(&bump_map(10.0)) - 10.0).abs() <= 0.125);
        // off-grid centre: the 3-bin centroid stays within half a bin
        let est = spectral_peak_baseline(&bump_map(9.6));
        assert!((est - 9.6).abs() <= 0.125, "{est}");
    }

    #[test]
    fn baseline_tie_rule_and_clamp() {
        let flat = PdrFeatureMap::from_values(Array2::from_elem((6, 48), 1.0), Side::Left).unwrap();
        // lowest argmax is the 3.00 Hz edge bin, which then clamps to 4
        assert_eq!(spectral_peak_baseline(&flat), 4.0);
        // plateau from 9.00 Hz upward: argmax is 9.00, neighbours 8.75 (0) and 9.25 (1)
        let plateau = Array2::from_shape_fn((6, 48), |(_, j)| if map_freq(j) >= 9.0 { 1.0 } else { 0.0 });
        let m = PdrFeatureMap::from_values(plateau, Side::Left).unwrap();
        assert!((spectral_peak_baseline(&m) - 9.125).abs() < 1e-12);
        assert_eq!(spectral_peak_baseline(&bump_map(2.0)), 4.0);
    }

    #[test]
    fn metrics_examples() {
        let m = pdr_metrics(&[8.0, 9.5], &[8.0, 9.5]).unwrap();
        assert_eq!((m.mae, m.rmse, m.r2, m.acc06, m.acc12), (0.0, 0.0, 1.0, 1.0, 1.0));
        let m = pdr_metrics(&[8.0], &[9.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.acc06, m.acc12), (1.0, 1.0, 0.0, 1.0));
        assert!(pdr_metrics(&[], &[]).is_err());
        assert!(pdr_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ensemble_of_clones_matches_member() {
        let model = PdrModel { cnn: Cnn::new(CnnArch::tiny(2, 4), 5), seed: 5, meta: TrainingMeta::default() };
        let ens = PdrEnsemble { members: vec![model.clone(), model.clone(), model.clone()] };
        let map = bump_map(9.0);
        assert!((ens.predict(&map) - model.predict(&map)).abs() < 1e-12);
        let p = model.predict(&map);
        assert!(p > 4.0 && p < 12.0);
    }
}
