//! Synthetic resting EEG used by fixtures, examples and benchmarks.
//!
//! Each channel is AR(1) background noise plus a waxing and waning alpha
//! rhythm weighted toward posterior sites. Optional focal theta and square
//! pulse artifacts can be injected.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{Annotation, Recording};
use crate::montage::{hemisphere_of, Hemisphere, ANALYSIS_CHANNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalTheta {
    pub channels: Vec<String>,
    pub hz: f64,
    pub amplitude_uv: f64,
}

/// Square pulse train added to one channel in selected epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseArtifact {
    pub channels: Vec<String>,
    pub epochs: Vec<usize>,
    pub epoch_len_s: f64,
    pub amplitude_uv: f64,
    pub period_s: f64,
    pub width_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub fs: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub pdr_left_hz: f64,
    pub pdr_right_hz: f64,
    /// Peak alpha amplitude at occipital sites, µV.
    pub alpha_uv: f64,
    /// Background noise standard deviation, µV.
    pub background_uv: f64,
    /// Adds Fpz, A1 and A2 after the analysis channels.
    pub extra_channels: bool,
    pub focal_theta: Option<FocalTheta>,
    pub artifacts: Vec<PulseArtifact>,
    pub annotations: Vec<Annotation>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            fs: 125.0,
            duration_s: 600.0,
            seed: 1,
            pdr_left_hz: 10.0,
            pdr_right_hz: 10.0,
            alpha_uv: 25.0,
            background_uv: 8.0,
            extra_channels: false,
            focal_theta: None,
            artifacts: Vec::new(),
            annotations: Vec::new(),
        }
    }
}

/// Relative alpha weight of a 10-20 site.
fn alpha_weight(label: &str) -> f64 {
    match label {
        "O1" | "O2" => 1.0,
        "P3" | "P4" | "T5" | "T6" | "Pz" => 0.8,
        "C3" | "C4" | "Cz" | "T3" | "T4" => 0.35,
        "Fp1" | "Fp2" | "Fpz" => 0.12,
        "A1" | "A2" => 0.3,
        _ => 0.18,
    }
}

pub(crate) fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

pub fn synth_recording(cfg: &SynthConfig) -> Recording {
    let mut labels: Vec<String> = ANALYSIS_CHANNELS.iter().map(|s| s.to_string()).collect();
    if cfg.extra_channels {
        labels.extend(["Fpz", "A1", "A2"].map(String::from));
    }
    let n = (cfg.duration_s * cfg.fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = 1.0 / cfg.fs;

    // shared alpha phase per hemisphere with slow frequency jitter
    let mut phase = [rng.random::<f64>() * 2.0 * PI, rng.random::<f64>() * 2.0 * PI];
    let mut jitter = 0.0f64;
    let mut alpha = Array2::<f64>::zeros((2, n));
    let env_phase = rng.random::<f64>() * 2.0 * PI;
    for t in 0..n {
        jitter = 0.995 * jitter + 0.01 * gaussian(&mut rng);
        let env = 0.75 + 0.25 * (2.0 * PI * 0.13 * t as f64 * dt + env_phase).sin();
        for (h, f0) in [cfg.pdr_left_hz, cfg.pdr_right_hz].into_iter().enumerate() {
            phase[h] += 2.0 * PI * (f0 + 0.1 * jitter.clamp(-1.0, 1.0)) * dt;
            alpha[[h, t]] = env * phase[h].sin();
        }
    }

    let ar = 0.9f64;
    let ar_gain = (1.0 - ar * ar).sqrt();
    let mut data = Array2::<f64>::zeros((labels.len(), n));
    for (c, label) in labels.iter().enumerate() {
        let hemi = hemisphere_of(label);
        let w = alpha_weight(label) * cfg.alpha_uv;
        let ch_phase = 0.2 * gaussian(&mut rng);
        let mut y = 0.0;
        for t in 0..n {
            y = ar * y + ar_gain * gaussian(&mut rng);
            let bg = cfg.background_uv * (0.8 * y + 0.6 * gaussian(&mut rng)) / 1.0;
            let a = match hemi {
                Hemisphere::Left => alpha[[0, t]],
                Hemisphere::Right => alpha[[1, t]],
                Hemisphere::Midline => 0.5 * (alpha[[0, t]] + alpha[[1, t]]),
            };
            data[[c, t]] = bg + w * (a * ch_phase.cos());
        }
    }

    if let Some(theta) = &cfg.focal_theta {
        let ph = rng.random::<f64>() * 2.0 * PI;
        for label in &theta.channels {
            if let Some(c) = labels.iter().position(|l| l == label) {
                for t in 0..n {
                    let env = 0.8 + 0.2 * (2.0 * PI * 0.07 * t as f64 * dt).sin();
                    data[[c, t]] += theta.amplitude_uv
                        * env
                        * (2.0 * PI * theta.hz * t as f64 * dt + ph).sin();
                }
            }
        }
    }

    for art in &cfg.artifacts {
        let spe = (art.epoch_len_s * cfg.fs).round() as usize;
        let period = (art.period_s * cfg.fs).round().max(1.0) as usize;
        let width = (art.width_s * cfg.fs).round().max(1.0) as usize;
        for label in &art.channels {
            let Some(c) = labels.iter().position(|l| l == label) else {
                continue;
            };
            for &e in &art.epochs {
                for k in 0..spe {
                    let t = e * spe + k;
                    if t < n && k % period < width {
                        data[[c, t]] += art.amplitude_uv;
                    }
                }
            }
        }
    }

    let mut rec = Recording::new(labels, cfg.fs, data).expect("labels match rows");
    rec.annotations = cfg.annotations.clone();
    rec
}

/// Named recordings used by the tests and the `synth` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    /// Symmetric 10 Hz alpha, no abnormality.
    Normal,
    /// 6 Hz theta over F7, T3 and T5.
    LeftTemporalTheta,
    /// 50 µV square pulses in F3 during every fifth 4 s epoch.
    F3Pulses,
}

impl Fixture {
    pub const ALL: [Fixture; 3] = [Fixture::Normal, Fixture::LeftTemporalTheta, Fixture::F3Pulses];

    pub fn config(self, seed: u64, duration_s: f64) -> SynthConfig {
        let base = SynthConfig { seed, duration_s, ..Default::default() };
        match self {
            Fixture::Normal => base,
            Fixture::LeftTemporalTheta => SynthConfig {
                focal_theta: Some(FocalTheta {
                    channels: vec!["F7".into(), "T3".into(), "T5".into()],
                    hz: 6.0,
                    amplitude_uv: 16.0,
                }),
                ..base
            },
            Fixture::F3Pulses => {
                let n_epochs = (duration_s / 4.0) as usize;
                SynthConfig {
                    artifacts: vec![PulseArtifact {
                        channels: vec!["F3".into()],
                        epochs: (0..n_epochs).filter(|e| e % 5 == 2).collect(),
                        epoch_len_s: 4.0,
                        amplitude_uv: 50.0,
                        period_s: 0.5,
                        width_s: 0.1,
                    }],
                    ..base
                }
            }
        }
    }
}
