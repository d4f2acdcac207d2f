//! EDF and annotation-sidecar ingest, plus restriction to the analysis
//! montage.
//!
//! Only plain EDF with 16-bit samples is read. Embedded EDF+ annotation
//! signals are skipped; annotations come from the tab-separated sidecar.

use std::fs;
use std::path::Path;

use log::info;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montage::{canonical_label, MontageMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub onset_s: f64,
    pub label: String,
}

/// Multichannel recording in microvolts, `data` is `[channels, samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub channels: Vec<String>,
    pub fs: f64,
    pub data: Array2<f64>,
    pub duration_s: f64,
    pub annotations: Vec<Annotation>,
}

impl Recording {
    pub fn new(channels: Vec<String>, fs: f64, data: Array2<f64>) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::InvalidParameter(format!("sampling rate {fs}")));
        }
        if data.nrows() != channels.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} data rows",
                channels.len(),
                data.nrows()
            )));
        }
        let duration_s = data.ncols() as f64 / fs;
        Ok(Recording {
            channels,
            fs,
            data,
            duration_s,
            annotations: Vec::new(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == label)
    }

    /// Annotations whose onset falls outside `[0, duration_s]`.
    pub fn annotation_warnings(&self) -> Vec<String> {
        self.annotations
            .iter()
            .filter(|a| a.onset_s < 0.0 || a.onset_s > self.duration_s)
            .map(|a| {
                format!(
                    "annotation `{}` at {} s lies outside [0, {}] s",
                    a.label, a.onset_s, self.duration_s
                )
            })
            .collect()
    }

    /// Keeps only the first `seconds` of signal (annotations beyond are dropped).
    pub fn crop(&self, seconds: f64) -> Recording {
        let n = ((seconds * self.fs).round() as usize).min(self.n_samples());
        let data = self.data.slice(ndarray::s![.., ..n]).to_owned();
        Recording {
            channels: self.channels.clone(),
            fs: self.fs,
            duration_s: n as f64 / self.fs,
            data,
            annotations: self
                .annotations
                .iter()
                .filter(|a| a.onset_s <= n as f64 / self.fs)
                .cloned()
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// EDF container

#[derive(Debug, Clone, PartialEq)]
pub struct EdfSignal {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefilter: String,
    pub samples_per_record: usize,
}

impl EdfSignal {
    fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64
    }

    pub fn to_physical(&self, d: i16) -> f64 {
        (d as f64 - self.digital_min as f64) * self.gain() + self.physical_min
    }

    pub fn to_digital(&self, p: f64) -> i16 {
        let d = (p - self.physical_min) / self.gain() + self.digital_min as f64;
        d.round()
            .clamp(self.digital_min as f64, self.digital_max as f64) as i16
    }

    fn unit_scale(&self) -> f64 {
        let dim = self.physical_dimension.trim();
        match dim {
            "mV" | "mv" => 1e3,
            "V" | "v" => 1e6,
            "nV" | "nv" => 1e-3,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub patient: String,
    pub recording: String,
    pub start_date: String,
    pub start_time: String,
    pub reserved: String,
    pub n_records: usize,
    pub record_duration_s: f64,
    pub signals: Vec<EdfSignal>,
}

/// Parsed EDF file holding the raw digital codes per signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfFile {
    pub header: EdfHeader,
    pub digital: Vec<Vec<i16>>,
}

struct Fields<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Fields<'a> {
    fn take(&mut self, len: usize, field: &str) -> Result<String> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(Error::EdfHeader {
                field: field.to_string(),
                detail: format!("header ends at byte {}", self.bytes.len()),
            });
        }
        let raw = &self.bytes[self.pos..end];
        self.pos = end;
        if !raw.iter().all(|b| (0x20..=0x7e).contains(b)) {
            return Err(Error::EdfHeader {
                field: field.to_string(),
                detail: "contains non-printable ASCII".into(),
            });
        }
        Ok(String::from_utf8_lossy(raw).trim().to_string())
    }

    fn number<T: std::str::FromStr>(&mut self, len: usize, field: &str) -> Result<T> {
        let s = self.take(len, field)?;
        s.parse::<T>().map_err(|_| Error::EdfHeader {
            field: field.to_string(),
            detail: format!("`{s}` is not a number"),
        })
    }
}

fn fixed(s: &str, len: usize) -> Vec<u8> {
    let mut out: Vec<u8> = s
        .bytes()
        .filter(|b| (0x20..=0x7e).contains(b))
        .take(len)
        .collect();
    out.resize(len, b' ');
    out
}

/// Formats a number into at most 8 ASCII characters.
fn fixed_number(v: f64) -> Vec<u8> {
    let mut s = format!("{v}");
    if s.len() > 8 {
        for prec in (0..8).rev() {
            s = format!("{v:.prec$}");
            if s.len() <= 8 {
                break;
            }
        }
    }
    fixed(&s, 8)
}

impl EdfFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut f = Fields { bytes, pos: 0 };
        let version = f.take(8, "version")?;
        if version != "0" {
            return Err(Error::EdfHeader {
                field: "version".into(),
                detail: format!("expected `0`, found `{version}`"),
            });
        }
        let patient = f.take(80, "patient")?;
        let recording = f.take(80, "recording")?;
        let start_date = f.take(8, "startdate")?;
        let start_time = f.take(8, "starttime")?;
        let header_bytes: usize = f.number(8, "header bytes")?;
        let reserved = f.take(44, "reserved")?;
        let n_records: i64 = f.number(8, "number of data records")?;
        if n_records < 0 {
            return Err(Error::EdfHeader {
                field: "number of data records".into(),
                detail: format!("{n_records} (unknown length is not supported)"),
            });
        }
        let record_duration_s: f64 = f.number(8, "duration of a data record")?;
        if !(record_duration_s > 0.0) {
            return Err(Error::EdfHeader {
                field: "duration of a data record".into(),
                detail: format!("{record_duration_s} must be positive"),
            });
        }
        let ns: usize = f.number(4, "number of signals")?;
        if ns == 0 {
            return Err(Error::EdfHeader {
                field: "number of signals".into(),
                detail: "zero signals".into(),
            });
        }
        if header_bytes != 256 * (ns + 1) {
            return Err(Error::EdfHeader {
                field: "header bytes".into(),
                detail: format!("{header_bytes} != 256 * ({ns} + 1)"),
            });
        }
        let mut col = |len: usize, name: &str| -> Result<Vec<String>> {
            (0..ns)
                .map(|i| f.take(len, &format!("{name}[{i}]")))
                .collect()
        };
        let labels = col(16, "label")?;
        let transducers = col(80, "transducer type")?;
        let dims = col(8, "physical dimension")?;
        let pmins = col(8, "physical minimum")?;
        let pmaxs = col(8, "physical maximum")?;
        let dmins = col(8, "digital minimum")?;
        let dmaxs = col(8, "digital maximum")?;
        let prefilters = col(80, "prefiltering")?;
        let sprs = col(8, "samples per record")?;
        let _reserved = col(32, "signal reserved")?;

        let num = |v: &str, field: &str, i: usize| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::EdfHeader {
                field: format!("{field}[{i}]"),
                detail: format!("`{v}` is not a number"),
            })
        };
        let mut signals = Vec::with_capacity(ns);
        for i in 0..ns {
            let spr = num(&sprs[i], "samples per record", i)?;
            if spr < 1.0 || spr.fract() != 0.0 {
                return Err(Error::EdfHeader {
                    field: format!("samples per record[{i}]"),
                    detail: format!("{spr} is not a positive integer"),
                });
            }
            let sig = EdfSignal {
                label: labels[i].clone(),
                transducer: transducers[i].clone(),
                physical_dimension: dims[i].clone(),
                physical_min: num(&pmins[i], "physical minimum", i)?,
                physical_max: num(&pmaxs[i], "physical maximum", i)?,
                digital_min: num(&dmins[i], "digital minimum", i)? as i32,
                digital_max: num(&dmaxs[i], "digital maximum", i)? as i32,
                prefilter: prefilters[i].clone(),
                samples_per_record: spr as usize,
            };
            if sig.physical_max == sig.physical_min {
                return Err(Error::Calibration {
                    channel: sig.label,
                    detail: "physical minimum equals physical maximum".into(),
                });
            }
            if sig.digital_max <= sig.digital_min {
                return Err(Error::Calibration {
                    channel: sig.label,
                    detail: "digital maximum must exceed digital minimum".into(),
                });
            }
            signals.push(sig);
        }

        let n_records = n_records as usize;
        let record_samples: usize = signals.iter().map(|s| s.samples_per_record).sum();
        let expected = n_records * record_samples * 2;
        let body = &bytes[header_bytes..];
        if body.len() < expected {
            return Err(Error::TruncatedData {
                expected,
                actual: body.len(),
            });
        }
        let mut digital: Vec<Vec<i16>> = signals
            .iter()
            .map(|s| Vec::with_capacity(s.samples_per_record * n_records))
            .collect();
        let mut off = 0;
        for _ in 0..n_records {
            for (i, s) in signals.iter().enumerate() {
                let chunk = &body[off..off + 2 * s.samples_per_record];
                digital[i].extend(
                    chunk
                        .chunks_exact(2)
                        .map(|b| i16::from_le_bytes([b[0], b[1]])),
                );
                off += chunk.len();
            }
        }
        Ok(EdfFile {
            header: EdfHeader {
                patient,
                recording,
                start_date,
                start_time,
                reserved,
                n_records,
                record_duration_s,
                signals,
            },
            digital,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let ns = h.signals.len();
        let mut out = Vec::with_capacity(256 * (ns + 1));
        out.extend(fixed("0", 8));
        out.extend(fixed(&h.patient, 80));
        out.extend(fixed(&h.recording, 80));
        out.extend(fixed(&h.start_date, 8));
        out.extend(fixed(&h.start_time, 8));
        out.extend(fixed(&(256 * (ns + 1)).to_string(), 8));
        out.extend(fixed(&h.reserved, 44));
        out.extend(fixed(&h.n_records.to_string(), 8));
        out.extend(fixed_number(h.record_duration_s));
        out.extend(fixed(&ns.to_string(), 4));
        let s = &h.signals;
        s.iter().for_each(|x| out.extend(fixed(&x.label, 16)));
        s.iter().for_each(|x| out.extend(fixed(&x.transducer, 80)));
        s.iter()
            .for_each(|x| out.extend(fixed(&x.physical_dimension, 8)));
        s.iter()
            .for_each(|x| out.extend(fixed_number(x.physical_min)));
        s.iter()
            .for_each(|x| out.extend(fixed_number(x.physical_max)));
        s.iter()
            .for_each(|x| out.extend(fixed(&x.digital_min.to_string(), 8)));
        s.iter()
            .for_each(|x| out.extend(fixed(&x.digital_max.to_string(), 8)));
        s.iter().for_each(|x| out.extend(fixed(&x.prefilter, 80)));
        s.iter()
            .for_each(|x| out.extend(fixed(&x.samples_per_record.to_string(), 8)));
        s.iter().for_each(|_| out.extend(fixed("", 32)));
        for r in 0..h.n_records {
            for (i, sig) in s.iter().enumerate() {
                let spr = sig.samples_per_record;
                for &d in &self.digital[i][r * spr..(r + 1) * spr] {
                    out.extend(d.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Encodes a recording with 1 s data records and a 0.1 µV quantum
    /// (physical ±3276.8 µV over the full int16 range). Samples beyond the
    /// last whole record are dropped.
    pub fn from_recording(rec: &Recording) -> Result<Self> {
        if rec.fs.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "EDF writer needs an integer sampling rate, got {}",
                rec.fs
            )));
        }
        let spr = rec.fs as usize;
        let n_records = rec.n_samples() / spr;
        let signals: Vec<EdfSignal> = rec
            .channels
            .iter()
            .map(|c| EdfSignal {
                label: c.clone(),
                transducer: "AgAgCl electrode".into(),
                physical_dimension: "uV".into(),
                physical_min: -3276.8,
                physical_max: 3276.7,
                digital_min: -32768,
                digital_max: 32767,
                prefilter: String::new(),
                samples_per_record: spr,
            })
            .collect();
        let digital = signals
            .iter()
            .zip(rec.data.rows())
            .map(|(s, row)| {
                row.iter()
                    .take(n_records * spr)
                    .map(|&v| s.to_digital(v))
                    .collect()
            })
            .collect();
        Ok(EdfFile {
            header: EdfHeader {
                patient: "X X X X".into(),
                recording: "Startdate X X X X".into(),
                start_date: "01.01.00".into(),
                start_time: "00.00.00".into(),
                reserved: String::new(),
                n_records,
                record_duration_s: 1.0,
                signals,
            },
            digital,
        })
    }

    /// Converts to microvolts. EDF+ annotation signals and known non-EEG
    /// channels are dropped, as are channels whose rate differs from the
    /// first EEG channel.
    pub fn to_recording(&self) -> Result<Recording> {
        let h = &self.header;
        let mut keep = Vec::new();
        let mut fs = None;
        for (i, s) in h.signals.iter().enumerate() {
            let label = canonical_label(&s.label);
            if is_non_eeg(&label) {
                info!("dropping non-EEG channel `{}`", s.label);
                continue;
            }
            let rate = s.samples_per_record as f64 / h.record_duration_s;
            match fs {
                None => fs = Some(rate),
                Some(f) if f != rate => {
                    info!("dropping channel `{}` sampled at {rate} Hz (recording is {f} Hz)", s.label);
                    continue;
                }
                _ => {}
            }
            keep.push((i, label));
        }
        let fs = fs.ok_or_else(|| Error::EdfHeader {
            field: "label".into(),
            detail: "no EEG signals".into(),
        })?;
        let n = keep
            .first()
            .map(|&(i, _)| self.digital[i].len())
            .unwrap_or(0);
        let mut data = Array2::<f64>::zeros((keep.len(), n));
        let mut channels: Vec<String> = Vec::with_capacity(keep.len());
        for (row, (i, label)) in keep.into_iter().enumerate() {
            if channels.contains(&label) {
                return Err(Error::DuplicateChannel(label));
            }
            let sig = &h.signals[i];
            let scale = sig.unit_scale();
            for (dst, &d) in data.row_mut(row).iter_mut().zip(&self.digital[i]) {
                *dst = sig.to_physical(d) * scale;
            }
            channels.push(label);
        }
        Recording::new(channels, fs, data)
    }
}

fn is_non_eeg(label: &str) -> bool {
    let up = label.to_ascii_uppercase();
    up.contains("ANNOTATION")
        || ["ECG", "EKG", "EMG", "EOG", "PHOTIC", "RESP", "SPO2", "PULSE", "IBI", "BURSTS", "SUPPR", "DC"]
            .iter()
            .any(|k| up.starts_with(k))
}

pub fn load_recording(path: impl AsRef<Path>) -> Result<Recording> {
    EdfFile::read(path)?.to_recording()
}

pub fn save_recording(rec: &Recording, path: impl AsRef<Path>) -> Result<()> {
    EdfFile::from_recording(rec)?.write(path)
}

// ---------------------------------------------------------------------------
// Annotations

/// Parses `onset<TAB>label` lines. Blank lines are skipped; output is sorted
/// by onset (stable for ties).
pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (onset, label) = line.split_once('\t').ok_or_else(|| Error::Annotation {
            line: i + 1,
            detail: "expected `<onset>\\t<label>`".into(),
        })?;
        let onset_s: f64 = onset.trim().parse().map_err(|_| Error::Annotation {
            line: i + 1,
            detail: format!("unparseable onset `{onset}`"),
        })?;
        if !onset_s.is_finite() {
            return Err(Error::Annotation {
                line: i + 1,
                detail: format!("non-finite onset `{onset}`"),
            });
        }
        out.push(Annotation {
            onset_s,
            label: label.to_string(),
        });
    }
    out.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text)
}

// ---------------------------------------------------------------------------
// Montage

/// Restricts a recording to the montage channels in canonical order.
pub fn apply_montage(rec: &Recording, montage: &MontageMap) -> Result<Recording> {
    let canon: Vec<String> = rec.channels.iter().map(|c| canonical_label(c)).collect();
    let mut rows = Vec::with_capacity(montage.len());
    let mut missing = Vec::new();
    for want in &montage.analysis_channels {
        match canon
            .iter()
            .position(|c| c.eq_ignore_ascii_case(want))
        {
            Some(i) => rows.push(i),
            None => missing.push(want.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingChannels(missing));
    }
    for (i, c) in rec.channels.iter().enumerate() {
        if !rows.contains(&i) {
            info!("channel `{c}` is not part of the analysis montage; dropped");
        }
    }
    let data = rec.data.select(ndarray::Axis(0), &rows);
    Ok(Recording {
        channels: montage.analysis_channels.clone(),
        fs: rec.fs,
        data,
        duration_s: rec.duration_s,
        annotations: rec.annotations.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montage::ANALYSIS_CHANNELS;

    fn rec_with(labels: &[&str]) -> Recording {
        let n = 10;
        let data = Array2::from_shape_fn((labels.len(), n), |(c, t)| (c * 100 + t) as f64);
        Recording::new(labels.iter().map(|s| s.to_string()).collect(), 5.0, data).unwrap()
    }

    #[test]
    fn montage_drops_extra_channels() {
        let mut labels: Vec<&str> = ANALYSIS_CHANNELS.to_vec();
        labels.insert(3, "Fpz");
        labels.push("A1");
        let out = apply_montage(&rec_with(&labels), &MontageMap::default()).unwrap();
        assert_eq!(out.channels.len(), 19);
        assert!(!out.channels.iter().any(|c| c == "Fpz" || c == "A1"));
        // O2 was row 19 in the input (0-based)
        assert_eq!(out.data[[18, 0]], 1900.0);
    }

    #[test]
    fn montage_accepts_t7_alias() {
        let labels: Vec<&str> = ANALYSIS_CHANNELS
            .iter()
            .map(|&c| if c == "T3" { "T7" } else { c })
            .collect();
        let out = apply_montage(&rec_with(&labels), &MontageMap::default()).unwrap();
        assert_eq!(out.channels[7], "T3");
    }

    #[test]
    fn montage_reports_missing_o2() {
        let labels: Vec<&str> = ANALYSIS_CHANNELS[..18].to_vec();
        match apply_montage(&rec_with(&labels), &MontageMap::default()) {
            Err(Error::MissingChannels(m)) => assert_eq!(m, vec!["O2".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn montage_is_idempotent() {
        let mut labels: Vec<&str> = ANALYSIS_CHANNELS.to_vec();
        labels.reverse();
        labels.push("ECG");
        let m = MontageMap::default();
        let once = apply_montage(&rec_with(&labels), &m).unwrap();
        let twice = apply_montage(&once, &m).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn annotations_parse_and_sort() {
        assert_eq!(
            parse_annotations("12.5\teye close\n").unwrap(),
            vec![Annotation {
                onset_s: 12.5,
                label: "eye close".into()
            }]
        );
        assert!(parse_annotations("").unwrap().is_empty());
        let a = parse_annotations("30\tb\n2.0\ta\n").unwrap();
        assert_eq!(a[0].label, "a");
        assert_eq!(a[1].label, "b");
    }

    #[test]
    fn annotation_error_names_line() {
        match parse_annotations("1\tok\nabc\tbad\n") {
            Err(Error::Annotation { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn annotation_warnings_flag_out_of_range() {
        let mut r = rec_with(&["Cz"]);
        r.annotations = parse_annotations("1\tin\n100\tout\n").unwrap();
        let w = r.annotation_warnings();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("out"));
    }

    #[test]
    fn negative_record_count_is_rejected() {
        let rec = rec_with(&["Cz", "Pz"]);
        let rec = Recording::new(rec.channels, 5.0, rec.data).unwrap();
        let mut bytes = EdfFile::from_recording(&rec).unwrap().to_bytes();
        bytes[236..244].copy_from_slice(b"-1      ");
        bytes.truncate(256 * 3);
        match EdfFile::from_bytes(&bytes) {
            Err(Error::EdfHeader { field, .. }) => assert_eq!(field, "number of data records"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fixed_number_fits_eight_chars() {
        assert_eq!(fixed_number(-3276.8), b"-3276.8 ".to_vec());
        assert_eq!(fixed_number(1.0 / 3.0).len(), 8);
        assert_eq!(
            String::from_utf8(fixed_number(1.0 / 3.0)).unwrap().trim(),
            "0.333333"
        );
    }
}
