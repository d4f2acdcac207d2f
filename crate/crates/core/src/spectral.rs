//! Multitaper power spectra on the 0.25 Hz grid of a 4 s epoch, band
//! integration, and the band-power background features.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array2, ArrayView2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dpss::dpss_cached;
use crate::error::{Error, Result};
use crate::montage::{Hemisphere, MontageMap, ANTERIOR, MIRROR_PAIRS, POSTERIOR};
use crate::par;
use crate::preprocess::EpochSet;

pub const GRID_STEP_HZ: f64 = 0.25;

pub const BAND_DELTA: (f64, f64) = (1.5, 4.0);
pub const BAND_THETA: (f64, f64) = (4.0, 8.0);
pub const BAND_ALPHA: (f64, f64) = (8.0, 13.0);
pub const BAND_BETA: (f64, f64) = (13.0, 30.0);
pub const BAND_TOTAL: (f64, f64) = (1.5, 30.0);
pub const BAND_SLOW: (f64, f64) = (1.5, 8.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::Delta, Band::Theta, Band::Alpha, Band::Beta];

    pub fn range(self) -> (f64, f64) {
        match self {
            Band::Delta => BAND_DELTA,
            Band::Theta => BAND_THETA,
            Band::Alpha => BAND_ALPHA,
            Band::Beta => BAND_BETA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultitaperConfig {
    pub nw: f64,
    pub n_tapers: usize,
}

impl Default for MultitaperConfig {
    fn default() -> Self {
        MultitaperConfig {
            nw: 4.0,
            n_tapers: 7,
        }
    }
}

/// One-sided PSD in µV²/Hz, `power` is `[channels, freqs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdTable {
    pub channels: Vec<String>,
    pub freqs: Vec<f64>,
    pub power: Array2<f64>,
    pub n_tapers: usize,
}

fn fft_for(n: usize) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<usize, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    plans
        .lock()
        .unwrap()
        .entry(n)
        .or_insert_with(|| FftPlanner::new().plan_fft_forward(n))
        .clone()
}

fn on_grid(f: f64) -> bool {
    let q = f / GRID_STEP_HZ;
    (q - q.round()).abs() < 1e-9
}

/// Multitaper one-sided spectrum of one channel over all bins `0..=n/2`,
/// after mean removal.
pub fn multitaper_spectrum(x: &[f64], fs: f64, cfg: &MultitaperConfig) -> Result<Vec<f64>> {
    let n = x.len();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input samples".into()));
    }
    let tapers = dpss_cached(n, cfg.nw, cfg.n_tapers)?;
    let fft = fft_for(n);
    let mean = x.iter().sum::<f64>() / n as f64;
    let n_bins = n / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for w in &tapers.windows {
        for ((b, &xi), &wi) in buf.iter_mut().zip(x).zip(w) {
            *b = Complex::new((xi - mean) * wi, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let k = tapers.windows.len() as f64;
    for (m, a) in acc.iter_mut().enumerate() {
        let one_sided = if m == 0 || (n % 2 == 0 && m == n / 2) { 1.0 } else { 2.0 };
        *a *= one_sided / (k * fs);
    }
    Ok(acc)
}

/// Multitaper PSD of an epoch `[channels, samples]` restricted to
/// `[fmin, fmax]`. The epoch length must give exactly 0.25 Hz bins.
pub fn multitaper_psd(
    epoch: ArrayView2<f64>,
    channels: &[String],
    fs: f64,
    fmin: f64,
    fmax: f64,
    cfg: &MultitaperConfig,
) -> Result<PsdTable> {
    let n = epoch.ncols();
    let bin = fs / n as f64;
    if (bin - GRID_STEP_HZ).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "{n} samples at {fs} Hz give {bin} Hz bins; epochs must span exactly {} s \
             (zero-padding is not used)",
            1.0 / GRID_STEP_HZ
        )));
    }
    if fmax > fs / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "fmax {fmax} Hz exceeds Nyquist {} Hz",
            fs / 2.0
        )));
    }
    if !(fmin >= 0.0 && fmin < fmax) || !on_grid(fmin) || !on_grid(fmax) {
        return Err(Error::InvalidParameter(format!(
            "frequency range [{fmin}, {fmax}] must be increasing and on the 0.25 Hz grid"
        )));
    }
    if epoch.nrows() != channels.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows",
            channels.len(),
            epoch.nrows()
        )));
    }
    let lo = (fmin / GRID_STEP_HZ).round() as usize;
    let hi = (fmax / GRID_STEP_HZ).round() as usize;
    let mut power = Array2::zeros((epoch.nrows(), hi - lo + 1));
    for (c, row) in epoch.axis_iter(Axis(0)).enumerate() {
        let x: Vec<f64> = row.iter().copied().collect();
        let s = multitaper_spectrum(&x, fs, cfg)?;
        for (j, m) in (lo..=hi).enumerate() {
            power[[c, j]] = s[m];
        }
    }
    Ok(PsdTable {
        channels: channels.to_vec(),
        freqs: (lo..=hi).map(|m| m as f64 * GRID_STEP_HZ).collect(),
        power,
        n_tapers: cfg.n_tapers,
    })
}

/// PSD of every epoch, computed in parallel and returned in epoch order.
pub fn epoch_psds(
    es: &EpochSet,
    fmin: f64,
    fmax: f64,
    cfg: &MultitaperConfig,
) -> Result<Vec<PsdTable>> {
    par::map_range(es.n_epochs(), |e| {
        multitaper_psd(
            es.epochs.index_axis(Axis(0), e),
            &es.channels,
            es.fs,
            fmin,
            fmax,
            cfg,
        )
    })
    .into_iter()
    .collect()
}

/// Mean of per-epoch PSDs. `use_entry(epoch, channel)` selects which
/// epoch-channel spectra enter each channel's average; a channel with no
/// usable entries gets a zero spectrum.
pub fn average_psd(psds: &[PsdTable], use_entry: impl Fn(usize, usize) -> bool) -> Result<PsdTable> {
    let first = psds
        .first()
        .ok_or_else(|| Error::InvalidParameter("no epochs to average".into()))?;
    let (c, f) = first.power.dim();
    let mut power = Array2::<f64>::zeros((c, f));
    let mut counts = vec![0usize; c];
    for (e, p) in psds.iter().enumerate() {
        if p.power.dim() != (c, f) {
            return Err(Error::Dimension("epoch PSDs differ in shape".into()));
        }
        for ch in 0..c {
            if use_entry(e, ch) {
                counts[ch] += 1;
                let mut row = power.row_mut(ch);
                row += &p.power.row(ch);
            }
        }
    }
    for (ch, &n) in counts.iter().enumerate() {
        if n > 0 {
            power.row_mut(ch).mapv_inplace(|v| v / n as f64);
        }
    }
    Ok(PsdTable {
        channels: first.channels.clone(),
        freqs: first.freqs.clone(),
        power,
        n_tapers: first.n_tapers,
    })
}

impl PsdTable {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == label)
    }

    fn indices(&self, labels: &[&str]) -> Result<Vec<usize>> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("empty channel subset".into()));
        }
        labels
            .iter()
            .map(|l| {
                self.channel_index(l)
                    .ok_or_else(|| Error::MissingChannels(vec![l.to_string()]))
            })
            .collect()
    }

    /// Trapezoidal integral of one channel's PSD over `[lo, hi]`.
    pub fn channel_band_power(&self, ch: usize, lo: f64, hi: f64) -> Result<f64> {
        let row = self.power.row(ch);
        match row.as_slice() {
            Some(v) => integrate_band(&self.freqs, v, lo, hi),
            None => integrate_band(&self.freqs, &row.to_vec(), lo, hi),
        }
    }

    /// Band power summed over a channel subset.
    pub fn band_power(&self, lo: f64, hi: f64, channels: &[&str]) -> Result<f64> {
        self.indices(channels)?
            .into_iter()
            .map(|ch| self.channel_band_power(ch, lo, hi))
            .sum()
    }

    /// Scales every value by `c`.
    pub fn scaled(&self, c: f64) -> PsdTable {
        PsdTable {
            power: self.power.mapv(|v| v * c),
            ..self.clone()
        }
    }

    /// Keeps only `[fmin, fmax]`.
    pub fn restrict(&self, fmin: f64, fmax: f64) -> Result<PsdTable> {
        let cols: Vec<usize> = (0..self.freqs.len())
            .filter(|&j| self.freqs[j] >= fmin - 1e-9 && self.freqs[j] <= fmax + 1e-9)
            .collect();
        if cols.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "[{fmin}, {fmax}] does not intersect the PSD grid"
            )));
        }
        Ok(PsdTable {
            channels: self.channels.clone(),
            freqs: cols.iter().map(|&j| self.freqs[j]).collect(),
            power: self.power.select(Axis(1), &cols),
            n_tapers: self.n_tapers,
        })
    }
}

/// Trapezoidal integral over `[lo, hi]` of the piecewise-linear interpolant
/// through `(freqs, values)`; `freqs` must be uniformly spaced.
pub fn integrate_band(freqs: &[f64], values: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let f0 = freqs[0];
    let f1 = *freqs.last().unwrap();
    if lo < f0 - 1e-9 || hi > f1 + 1e-9 || lo > hi {
        return Err(Error::InvalidParameter(format!(
            "band [{lo}, {hi}] outside PSD grid [{f0}, {f1}]"
        )));
    }
    if freqs.len() == 1 {
        return Ok(0.0);
    }
    let step = freqs[1] - freqs[0];
    let last = freqs.len() - 1;
    let value_at = |f: f64| -> f64 {
        let q = ((f - f0) / step).clamp(0.0, last as f64);
        let i = q.floor() as usize;
        if i >= last {
            return values[last];
        }
        let t = q - i as f64;
        values[i] * (1.0 - t) + values[i + 1] * t
    };
    let mut total = 0.0;
    let mut prev = lo;
    for &f in freqs.iter().filter(|&&f| f > lo + 1e-9 && f < hi - 1e-9) {
        total += 0.5 * (value_at(prev) + value_at(f)) * (f - prev);
        prev = f;
    }
    total += 0.5 * (value_at(prev) + value_at(hi)) * (hi - prev);
    Ok(total)
}

// ---------------------------------------------------------------------------
// Background features

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lateral {
    pub left: f64,
    pub right: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRatio {
    pub left: String,
    pub right: String,
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrBandRatio {
    pub pairs: Vec<PairRatio>,
    pub hemispheric: f64,
    pub hemispheric_degenerate: bool,
}

impl LrBandRatio {
    pub fn pair_value(&self, left: &str) -> Option<f64> {
        self.pairs.iter().find(|p| p.left == left).map(|p| p.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdrEstimate {
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundFeatures {
    /// Anterior ÷ posterior alpha power, percent.
    pub ap_gradient: Lateral,
    /// 1.5–30 Hz power summed over each electrode group, µV².
    pub total_power: Lateral,
    /// 1.5–8 Hz share of 1.5–30 Hz power, percent.
    pub slow_ratio: Lateral,
    pub lr_ratio: BTreeMap<Band, LrBandRatio>,
    /// Peak-to-peak band amplitude, µV.
    pub band_amplitude: BTreeMap<Band, f64>,
    pub pdr: Option<PdrEstimate>,
    pub bad_channels: Vec<String>,
    pub included_epochs: usize,
    pub total_epochs: usize,
}

/// `2 (left − right) / (left + right)`; both zero yields `(0, true)`.
pub fn lr_formula(left: f64, right: f64) -> (f64, bool) {
    let s = left + right;
    if s == 0.0 {
        (0.0, true)
    } else {
        (2.0 * (left - right) / s, false)
    }
}

fn group<'a>(labels: &[&'a str], montage: &MontageMap, hemi: Option<Hemisphere>) -> Vec<&'a str> {
    labels
        .iter()
        .copied()
        .filter(|l| hemi.is_none_or(|h| montage.hemisphere.get(*l) == Some(&h)))
        .collect()
}

pub fn ap_gradient(psd: &PsdTable, montage: &MontageMap) -> Result<Lateral> {
    let ratio = |hemi: Option<Hemisphere>| -> Result<f64> {
        let a = psd.band_power(BAND_ALPHA.0, BAND_ALPHA.1, &group(&ANTERIOR, montage, hemi))?;
        let p = psd.band_power(BAND_ALPHA.0, BAND_ALPHA.1, &group(&POSTERIOR, montage, hemi))?;
        if p <= 0.0 {
            return Err(Error::DegeneratePosterior);
        }
        Ok(100.0 * a / p)
    };
    Ok(Lateral {
        left: ratio(Some(Hemisphere::Left))?,
        right: ratio(Some(Hemisphere::Right))?,
        total: ratio(None)?,
    })
}

fn side_channels(psd: &PsdTable, montage: &MontageMap, hemi: Option<Hemisphere>) -> Vec<String> {
    psd.channels
        .iter()
        .filter(|c| hemi.is_none_or(|h| montage.hemisphere.get(*c) == Some(&h)))
        .cloned()
        .collect()
}

fn lateral_with(
    psd: &PsdTable,
    montage: &MontageMap,
    f: impl Fn(&[&str]) -> Result<f64>,
) -> Result<Lateral> {
    let run = |hemi| {
        let owned = side_channels(psd, montage, hemi);
        let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
        f(&refs)
    };
    Ok(Lateral {
        left: run(Some(Hemisphere::Left))?,
        right: run(Some(Hemisphere::Right))?,
        total: run(None)?,
    })
}

pub fn total_power(psd: &PsdTable, montage: &MontageMap) -> Result<Lateral> {
    lateral_with(psd, montage, |chs| psd.band_power(BAND_TOTAL.0, BAND_TOTAL.1, chs))
}

/// Percent of 1.5–30 Hz power lying in 1.5–8 Hz; zero when there is no power.
pub fn slow_ratio(psd: &PsdTable, montage: &MontageMap) -> Result<Lateral> {
    lateral_with(psd, montage, |chs| {
        let total = psd.band_power(BAND_TOTAL.0, BAND_TOTAL.1, chs)?;
        let slow = psd.band_power(BAND_SLOW.0, BAND_SLOW.1, chs)?;
        Ok(if total > 0.0 { 100.0 * slow / total } else { 0.0 })
    })
}

pub fn lr_band_ratio(psd: &PsdTable, band: Band) -> Result<LrBandRatio> {
    let (lo, hi) = band.range();
    let mut pairs = Vec::with_capacity(MIRROR_PAIRS.len());
    let (mut sum_l, mut sum_r) = (0.0, 0.0);
    for (l, r) in MIRROR_PAIRS {
        let pl = psd.band_power(lo, hi, &[l])?;
        let pr = psd.band_power(lo, hi, &[r])?;
        sum_l += pl;
        sum_r += pr;
        let (value, degenerate) = lr_formula(pl, pr);
        pairs.push(PairRatio {
            left: l.to_string(),
            right: r.to_string(),
            value,
            degenerate,
        });
    }
    let (hemispheric, hemispheric_degenerate) = lr_formula(sum_l, sum_r);
    Ok(LrBandRatio {
        pairs,
        hemispheric,
        hemispheric_degenerate,
    })
}

/// Mean peak-to-peak amplitude `2·√(2·P)` over included epochs and usable
/// channels, where `P` is the integrated band power of one epoch-channel.
pub fn band_amplitude(
    epoch_psds: &[PsdTable],
    use_entry: impl Fn(usize, usize) -> bool,
    band: Band,
) -> Result<f64> {
    let (lo, hi) = band.range();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (e, p) in epoch_psds.iter().enumerate() {
        for ch in 0..p.n_channels() {
            if use_entry(e, ch) {
                sum += 2.0 * (2.0 * p.channel_band_power(ch, lo, hi)?).sqrt();
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidParameter(
            "band amplitude needs at least one included epoch".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// Band-power features of the recording-level PSD (1.5–30 Hz grid or wider).
pub fn background_features(
    psd: &PsdTable,
    epoch_psds: &[PsdTable],
    use_entry: impl Fn(usize, usize) -> bool + Copy,
    montage: &MontageMap,
) -> Result<BackgroundFeatures> {
    let mut lr_ratio = BTreeMap::new();
    let mut band_amp = BTreeMap::new();
    for band in Band::ALL {
        lr_ratio.insert(band, lr_band_ratio(psd, band)?);
        band_amp.insert(band, band_amplitude(epoch_psds, use_entry, band)?);
    }
    Ok(BackgroundFeatures {
        ap_gradient: ap_gradient(psd, montage)?,
        total_power: total_power(psd, montage)?,
        slow_ratio: slow_ratio(psd, montage)?,
        lr_ratio,
        band_amplitude: band_amp,
        pdr: None,
        bad_channels: Vec::new(),
        included_epochs: 0,
        total_epochs: epoch_psds.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montage::ANALYSIS_CHANNELS;
    use approx::assert_relative_eq;

    fn flat(channels: &[&str], lo: f64, hi: f64, value: f64) -> PsdTable {
        let freqs: Vec<f64> = (0..=((hi - lo) / GRID_STEP_HZ) as usize)
            .map(|i| lo + i as f64 * GRID_STEP_HZ)
            .collect();
        PsdTable {
            channels: channels.iter().map(|s| s.to_string()).collect(),
            power: Array2::from_elem((channels.len(), freqs.len()), value),
            freqs,
            n_tapers: 7,
        }
    }

    fn with_band(psd: &mut PsdTable, ch: &str, lo: f64, hi: f64, v: f64) {
        let c = psd.channel_index(ch).unwrap();
        for (j, &f) in psd.freqs.clone().iter().enumerate() {
            if f >= lo && f <= hi {
                psd.power[[c, j]] = v;
            }
        }
    }

    #[test]
    fn band_power_rectangle_and_additivity() {
        let p = flat(&["Cz"], 0.0, 40.0, 1.0);
        assert_relative_eq!(p.band_power(1.5, 30.0, &["Cz"]).unwrap(), 28.5, epsilon = 1e-12);
        let p2 = flat(&["C3", "C4"], 0.0, 40.0, 1.0);
        assert_relative_eq!(p2.band_power(8.0, 10.0, &["C3", "C4"]).unwrap(), 4.0, epsilon = 1e-12);
        assert!(p2.band_power(8.0, 10.0, &[]).is_err());
    }

    #[test]
    fn band_outside_support_is_zero() {
        let mut p = flat(&["Cz"], 0.0, 40.0, 0.0);
        with_band(&mut p, "Cz", 20.0, 25.0, 3.0);
        assert_eq!(p.band_power(1.5, 8.0, &["Cz"]).unwrap(), 0.0);
    }

    #[test]
    fn slow_ratio_cases() {
        let m = MontageMap::default();
        let p = flat(&ANALYSIS_CHANNELS, 0.0, 40.0, 1.0);
        let s = slow_ratio(&p, &m).unwrap();
        assert_relative_eq!(s.total, 100.0 * 6.5 / 28.5, epsilon = 1e-9);
        let mut p = flat(&ANALYSIS_CHANNELS, 0.0, 40.0, 0.0);
        for c in ANALYSIS_CHANNELS {
            with_band(&mut p, c, 2.0, 7.5, 1.0);
        }
        assert_relative_eq!(slow_ratio(&p, &m).unwrap().left, 100.0, epsilon = 1e-9);
        let mut p = flat(&ANALYSIS_CHANNELS, 0.0, 40.0, 0.0);
        for c in ANALYSIS_CHANNELS {
            with_band(&mut p, c, 8.5, 29.0, 1.0);
        }
        assert_relative_eq!(slow_ratio(&p, &m).unwrap().right, 0.0, epsilon = 1e-9);
    }

    fn ap_psd(anterior: f64, posterior: f64) -> PsdTable {
        let mut p = flat(&ANALYSIS_CHANNELS, 0.0, 40.0, 0.0);
        for c in ANTERIOR {
            with_band(&mut p, c, 0.0, 40.0, anterior);
        }
        for c in POSTERIOR {
            with_band(&mut p, c, 0.0, 40.0, posterior);
        }
        p
    }

    #[test]
    fn ap_gradient_cases() {
        let m = MontageMap::default();
        assert_relative_eq!(ap_gradient(&ap_psd(2.0, 2.0), &m).unwrap().total, 100.0, epsilon = 1e-9);
        assert_relative_eq!(ap_gradient(&ap_psd(1.0, 2.0), &m).unwrap().left, 50.0, epsilon = 1e-9);
        let g = ap_gradient(&ap_psd(3.0, 10.0), &m).unwrap();
        assert_relative_eq!(g.right, 30.0, epsilon = 1e-9);
        assert!(g.total < 40.0);
        assert!(matches!(
            ap_gradient(&ap_psd(1.0, 0.0), &m),
            Err(Error::DegeneratePosterior)
        ));
    }

    #[test]
    fn ap_gradient_is_scale_invariant() {
        let m = MontageMap::default();
        let p = ap_psd(3.0, 7.0);
        let a = ap_gradient(&p, &m).unwrap();
        let b = ap_gradient(&p.scaled(13.7), &m).unwrap();
        assert_relative_eq!(a.total, b.total, max_relative = 1e-12);
    }

    #[test]
    fn lr_formula_cases() {
        assert_eq!(lr_formula(2.0, 2.0), (0.0, false));
        assert_eq!(lr_formula(3.0, 1.0), (1.0, false));
        assert_eq!(lr_formula(1.0, 3.0), (-1.0, false));
        assert_eq!(lr_formula(0.0, 0.0), (0.0, true));
    }

    #[test]
    fn lr_band_ratio_per_pair() {
        let mut p = flat(&ANALYSIS_CHANNELS, 0.0, 40.0, 1.0);
        with_band(&mut p, "T3", 0.0, 40.0, 3.0);
        let r = lr_band_ratio(&p, Band::Theta).unwrap();
        assert_relative_eq!(r.pair_value("T3").unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.pair_value("O1").unwrap(), 0.0, epsilon = 1e-12);
        assert!(r.hemispheric > 0.0 && r.hemispheric < 1.0);
    }

    #[test]
    fn psd_rejects_bad_resolution_and_nyquist() {
        let e = Array2::<f64>::zeros((1, 250));
        let ch = vec!["Cz".to_string()];
        let cfg = MultitaperConfig::default();
        assert!(multitaper_psd(e.view(), &ch, 125.0, 1.5, 30.0, &cfg).is_err());
        let e = Array2::<f64>::zeros((1, 500));
        assert!(multitaper_psd(e.view(), &ch, 125.0, 1.5, 70.0, &cfg).is_err());
        let z = multitaper_psd(e.view(), &ch, 125.0, 1.5, 30.0, &cfg).unwrap();
        assert!(z.power.iter().all(|&v| v == 0.0));
        assert_eq!(z.freqs.len(), 115);
    }
}
