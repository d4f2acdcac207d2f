//! The 31 per-epoch-per-channel features fed to HBOS.

use crate::error::{Error, Result};
use crate::spectral::{
    integrate_band, multitaper_spectrum, MultitaperConfig, BAND_ALPHA, BAND_BETA, BAND_DELTA,
    BAND_THETA, BAND_TOTAL,
};

pub const N_FEATURES: usize = 31;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "mean",
    "variance",
    "sd",
    "skewness",
    "excess_kurtosis",
    "min",
    "max",
    "peak_to_peak",
    "rms",
    "median",
    "mad",
    "line_length",
    "zero_crossings",
    "hjorth_activity",
    "hjorth_mobility",
    "hjorth_complexity",
    "diff1_rms",
    "diff2_rms",
    "autocorr_lag1",
    "abs_delta",
    "abs_theta",
    "abs_alpha",
    "abs_beta",
    "abs_total",
    "rel_delta",
    "rel_theta",
    "rel_alpha",
    "rel_beta",
    "spectral_entropy",
    "sef95",
    "peak_frequency",
];

/// Index of absolute alpha power in the feature vector.
pub const ABS_ALPHA: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochChannelFeatures {
    pub values: [f64; N_FEATURES],
}

fn median_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

pub fn extract_features(x: &[f64], fs: f64, mt: &MultitaperConfig) -> Result<EpochChannelFeatures> {
    if x.len() < 4 {
        return Err(Error::InvalidParameter("epoch too short for features".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("epoch samples".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let m2 = centered.iter().map(|d| d * d).sum::<f64>() / n;
    let m3 = centered.iter().map(|d| d * d * d).sum::<f64>() / n;
    let m4 = centered.iter().map(|d| d * d * d * d).sum::<f64>() / n;
    let sd = m2.sqrt();
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median_of(x.to_vec());
    let mad = median_of(x.iter().map(|v| (v - med).abs()).collect());
    let d1: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d2: Vec<f64> = d1.windows(2).map(|w| w[1] - w[0]).collect();
    let line_length = d1.iter().map(|d| d.abs()).sum::<f64>();
    let zero_crossings = centered
        .windows(2)
        .filter(|w| (w[0] < 0.0 && w[1] >= 0.0) || (w[0] > 0.0 && w[1] <= 0.0))
        .count() as f64;
    let var_d1 = {
        let m = d1.iter().sum::<f64>() / d1.len() as f64;
        d1.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d1.len() as f64
    };
    let var_d2 = {
        let m = d2.iter().sum::<f64>() / d2.len() as f64;
        d2.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d2.len() as f64
    };
    let mobility = if m2 > 0.0 { (var_d1 / m2).sqrt() } else { 0.0 };
    let complexity = if var_d1 > 0.0 && mobility > 0.0 {
        (var_d2 / var_d1).sqrt() / mobility
    } else {
        0.0
    };
    let autocorr = if m2 > 0.0 {
        centered.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n * m2)
    } else {
        0.0
    };

    let spectrum = multitaper_spectrum(x, fs, mt)?;
    let df = fs / x.len() as f64;
    let freqs: Vec<f64> = (0..spectrum.len()).map(|m| m as f64 * df).collect();
    let band = |b: (f64, f64)| integrate_band(&freqs, &spectrum, b.0, b.1.min(fs / 2.0));
    let delta = band(BAND_DELTA)?;
    let theta = band(BAND_THETA)?;
    let alpha = band(BAND_ALPHA)?;
    let beta = band(BAND_BETA)?;
    let total = band(BAND_TOTAL)?;
    let rel = |p: f64| if total > 0.0 { p / total } else { 0.0 };

    let in_band: Vec<(f64, f64)> = freqs
        .iter()
        .zip(&spectrum)
        .filter(|(f, _)| **f >= BAND_TOTAL.0 && **f <= BAND_TOTAL.1)
        .map(|(f, p)| (*f, *p))
        .collect();
    let band_sum: f64 = in_band.iter().map(|(_, p)| p).sum();
    let (entropy, sef95, peak) = if band_sum > 0.0 && in_band.len() > 1 {
        let h: f64 = in_band
            .iter()
            .map(|(_, p)| p / band_sum)
            .filter(|&q| q > 0.0)
            .map(|q| -q * q.ln())
            .sum();
        let mut cum = 0.0;
        let mut edge = in_band.last().unwrap().0;
        for (f, p) in &in_band {
            cum += p;
            if cum >= 0.95 * band_sum {
                edge = *f;
                break;
            }
        }
        let peak = in_band
            .iter()
            .fold((in_band[0].0, f64::NEG_INFINITY), |acc, &(f, p)| {
                if p > acc.1 {
                    (f, p)
                } else {
                    acc
                }
            })
            .0;
        (h / (in_band.len() as f64).ln(), edge, peak)
    } else {
        (0.0, 0.0, 0.0)
    };

    let values = [
        mean,
        m2,
        sd,
        skew,
        kurt,
        min,
        max,
        max - min,
        rms(x.iter().copied()),
        med,
        mad,
        line_length,
        zero_crossings,
        m2,
        mobility,
        complexity,
        rms(d1.iter().copied()),
        rms(d2.iter().copied()),
        autocorr,
        delta,
        theta,
        alpha,
        beta,
        total,
        rel(delta),
        rel(theta),
        rel(alpha),
        rel(beta),
        entropy,
        sef95,
        peak,
    ];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector".into()));
    }
    Ok(EpochChannelFeatures { values })
}
