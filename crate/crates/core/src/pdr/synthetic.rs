//! Synthetic PDR training corpus: Gaussian alpha bumps at a known frequency
//! over a 1/f background with multiplicative noise.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{map_freq, MAP_FMIN_HZ, LabeledExample, PdrFeatureMap, Side, MAP_BINS, MAP_ROWS};
use crate::synth::gaussian;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Each file yields a left and a right example.
    pub n_files: usize,
    pub seed: u64,
    /// Relative standard deviation of the multiplicative noise.
    pub noise: f64,
    /// Probability that the two hemispheres differ by 0.5 Hz.
    pub asymmetry_prob: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { n_files: 500, seed: 0, noise: 0.1, asymmetry_prob: 0.2 }
    }
}

fn side_rows(rng: &mut ChaCha8Rng, f0: f64, noise: f64) -> [[f64; MAP_BINS]; 3] {
    let mut rows = [[0.0; MAP_BINS]; 3];
    for row in &mut rows {
        let amp = rng.random_range(0.5..1.5);
        let width = rng.random_range(0.4..0.8);
        let center = f0 + 0.05 * gaussian(rng);
        // 1/f floor, at most 40% of the bump height at the 3 Hz edge
        let bg = amp * rng.random_range(0.05..0.4) * MAP_FMIN_HZ;
        for (j, v) in row.iter_mut().enumerate() {
            let f = map_freq(j);
            let d = (f - center) / width;
            let clean = amp * (-0.5 * d * d).exp() + bg / f;
            *v = (clean * (1.0 + noise * gaussian(rng))).max(0.0);
        }
    }
    rows
}

pub fn synthetic_corpus(cfg: &CorpusConfig) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(2 * cfg.n_files);
    for file in 0..cfg.n_files {
        let left_hz = 4.0 + 0.5 * rng.random_range(0..17) as f64;
        let right_hz = if rng.random::<f64>() < cfg.asymmetry_prob {
            let step = if rng.random::<bool>() { 0.5 } else { -0.5 };
            (left_hz + step).clamp(4.0, 12.0)
        } else {
            left_hz
        };
        let left = side_rows(&mut rng, left_hz, cfg.noise);
        let right = side_rows(&mut rng, right_hz, cfg.noise);
        let key = format!("synth{file:04}");
        for (side, first, second, label) in [
            (Side::Left, &left, &right, left_hz),
            (Side::Right, &right, &left, right_hz),
        ] {
            let values = Array2::from_shape_fn((MAP_ROWS, MAP_BINS), |(r, j)| {
                if r < 3 {
                    first[r][j]
                } else {
                    second[r - 3][j]
                }
            });
            let map = PdrFeatureMap::from_values(values, side).expect("finite map");
            out.push(LabeledExample::new(map, label, key.clone()).expect("label in range"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdr::{pdr_metrics, spectral_peak_baseline};

    #[test]
    fn corpus_shape_and_labels() {
        let c = synthetic_corpus(&CorpusConfig { n_files: 50, ..Default::default() });
        assert_eq!(c.len(), 100);
        assert!(c.iter().all(|e| (e.label_hz * 2.0).fract() == 0.0));
        assert!(c.iter().all(|e| e.features.values.iter().cloned().fold(0.0, f64::max) == 1.0));
        assert_eq!(c[0].group_key, c[1].group_key);
    }

    #[test]
    fn baseline_is_accurate_on_corpus() {
        let c = synthetic_corpus(&CorpusConfig { n_files: 200, seed: 7, ..Default::default() });
        let pred: Vec<f64> = c.iter().map(|e| spectral_peak_baseline(&e.features)).collect();
        let labels: Vec<f64> = c.iter().map(|e| e.label_hz).collect();
        let m = pdr_metrics(&pred, &labels).unwrap();
        assert!(m.acc12 >= 0.95, "{m:?}");
    }
}
