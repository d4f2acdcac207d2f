//! On-disk formats: feature maps, the dataset manifest and model files.
//!
//! Feature map: 16-byte header of four little-endian u32 (rows, cols, depth,
//! dtype code 1 = f32) followed by row-major f32 LE values.
//!
//! Model file: `EEGBGPDR`, u32 version, u32 length + JSON header (architecture,
//! training config, per-member seed and history), then for every member each
//! parameter tensor as u32 name length, name, u32 rank, u32 dims, f32 LE data.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::cnn::{Cnn, CnnArch};
use super::train::TrainConfig;
use super::{normalize_label, LabeledExample, PdrEnsemble, PdrFeatureMap, PdrModel, Side, TrainingMeta, MAP_BINS, MAP_ROWS};
use crate::{Error, Result};

const MAP_DTYPE_F32: u32 = 1;
const MODEL_MAGIC: &[u8; 8] = b"EEGBGPDR";
pub const MODEL_VERSION: u32 = 1;

pub fn write_feature_map(path: &Path, map: &PdrFeatureMap) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * map.values.len());
    for v in [MAP_ROWS as u32, MAP_BINS as u32, 1, MAP_DTYPE_F32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &v in map.values.iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_feature_map(path: &Path, side: Side) -> Result<PdrFeatureMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::Dimension(format!("{}: feature map shorter than its header", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let (rows, cols, depth, dtype) = (word(0) as usize, word(1) as usize, word(2) as usize, word(3));
    if (rows, cols, depth) != (MAP_ROWS, MAP_BINS, 1) || dtype != MAP_DTYPE_F32 {
        return Err(Error::Dimension(format!(
            "{}: expected 6x48x1 f32 map, header says {rows}x{cols}x{depth} dtype {dtype}",
            path.display()
        )));
    }
    let body = &bytes[16..];
    if body.len() != 4 * rows * cols {
        return Err(Error::TruncatedData { expected: 4 * rows * cols, actual: body.len() });
    }
    let vals: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    PdrFeatureMap::from_values(Array2::from_shape_vec((rows, cols), vals).unwrap(), side)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub file_id: String,
    pub side: Side,
    pub label_hz: f64,
    pub feature_path: PathBuf,
}

/// Reads `file_id,side,label_hz,feature_path`. Relative feature paths are
/// resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && cols.first() == Some(&"file_id") {
            continue;
        }
        let bad = |detail: String| Error::Annotation { line: i + 1, detail };
        if cols.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", cols.len())));
        }
        let label_hz: f64 = cols[2].parse().map_err(|_| bad(format!("bad label `{}`", cols[2])))?;
        normalize_label(label_hz).map_err(|e| bad(e.to_string()))?;
        if cols[0].is_empty() {
            return Err(bad("empty file_id".into()));
        }
        let fp = PathBuf::from(cols[3]);
        rows.push(ManifestRow {
            file_id: cols[0].to_string(),
            side: cols[1].parse().map_err(|e: Error| bad(e.to_string()))?,
            label_hz,
            feature_path: if fp.is_absolute() { fp } else { base.join(fp) },
        });
    }
    Ok(rows)
}

pub fn load_dataset(manifest: &Path) -> Result<Vec<LabeledExample>> {
    read_manifest(manifest)?
        .into_iter()
        .map(|r| LabeledExample::new(read_feature_map(&r.feature_path, r.side)?, r.label_hz, r.file_id))
        .collect()
}

/// Writes each example's map under `dir` and a `manifest.csv` that indexes them.
pub fn write_dataset(dir: &Path, data: &[LabeledExample]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from("file_id,side,label_hz,feature_path\n");
    for e in data {
        let name = format!("{}_{}.map", e.group_key, e.features.side.as_str());
        write_feature_map(&dir.join(&name), &e.features)?;
        csv.push_str(&format!("{},{},{},{}\n", e.group_key, e.features.side.as_str(), e.label_hz, name));
    }
    let path = dir.join("manifest.csv");
    crate::fsutil::write_atomic(&path, csv.as_bytes())?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MemberHeader {
    seed: u64,
    meta: TrainingMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelHeader {
    arch: CnnArch,
    train_config: Option<TrainConfig>,
    members: Vec<MemberHeader>,
}

pub fn encode_ensemble(ens: &PdrEnsemble, cfg: Option<&TrainConfig>) -> Result<Vec<u8>> {
    let first = ens
        .members
        .first()
        .ok_or_else(|| Error::ModelFormat("ensemble has no members".into()))?;
    if ens.members.iter().any(|m| m.cnn.arch != first.cnn.arch) {
        return Err(Error::ModelFormat("ensemble members differ in architecture".into()));
    }
    let header = ModelHeader {
        arch: first.cnn.arch.clone(),
        train_config: cfg.cloned(),
        members: ens.members.iter().map(|m| MemberHeader { seed: m.seed, meta: m.meta.clone() }).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for m in &ens.members {
        for (name, shape, range) in m.cnn.layout() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &m.cnn.params[range] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::ModelFormat("unexpected end of model file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_ensemble(bytes: &[u8]) -> Result<(PdrEnsemble, Option<TrainConfig>)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8)? != MODEL_MAGIC {
        return Err(Error::ModelFormat("not a PDR model file".into()));
    }
    let version = c.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!("unsupported model version {version}")));
    }
    let n = c.u32()? as usize;
    let header: ModelHeader = serde_json::from_slice(c.take(n)?)?;
    let mut members = Vec::with_capacity(header.members.len());
    for mh in header.members {
        let mut cnn: Cnn<f32> = Cnn::new(header.arch.clone(), 0);
        for (name, shape, range) in cnn.layout() {
            let len = c.u32()? as usize;
            let got = String::from_utf8_lossy(c.take(len)?).into_owned();
            let rank = c.u32()? as usize;
            let dims = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if got != name || dims != shape {
                return Err(Error::ModelFormat(format!(
                    "tensor `{got}` {dims:?} does not match expected `{name}` {shape:?}"
                )));
            }
            let raw = c.take(4 * range.len())?;
            for (p, b) in cnn.params[range].iter_mut().zip(raw.chunks_exact(4)) {
                *p = f32::from_le_bytes(b.try_into().unwrap());
            }
        }
        members.push(PdrModel { cnn, seed: mh.seed, meta: mh.meta });
    }
    if c.pos != bytes.len() {
        return Err(Error::ModelFormat(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    if members.is_empty() {
        return Err(Error::ModelFormat("model file has no members".into()));
    }
    Ok((PdrEnsemble { members }, header.train_config))
}

pub fn save_ensemble(path: &Path, ens: &PdrEnsemble, cfg: Option<&TrainConfig>) -> Result<()> {
    crate::fsutil::write_atomic(path, &encode_ensemble(ens, cfg)?)
}

pub fn load_ensemble(path: &Path) -> Result<PdrEnsemble> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(decode_ensemble(&bytes)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdr::synthetic::{synthetic_corpus, CorpusConfig};

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = synthetic_corpus(&CorpusConfig { n_files: 3, ..Default::default() });
        let manifest = write_dataset(dir.path(), &data).unwrap();
        let back = load_dataset(&manifest).unwrap();
        assert_eq!(back.len(), data.len());
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.group_key, b.group_key);
            assert_eq!(a.label_hz, b.label_hz);
            assert_eq!(a.features.side, b.features.side);
            for (x, y) in a.features.values.iter().zip(b.features.values.iter()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        let raw = fs::read(dir.path().join("synth0000_left.map")).unwrap();
        assert_eq!(raw.len(), 16 + 4 * 288);
        assert_eq!(&raw[..16], &[6, 0, 0, 0, 48, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn manifest_rejects_out_of_range_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "file_id,side,label_hz,feature_path\na,left,13.0,a.map\n").unwrap();
        match read_manifest(&p) {
            Err(Error::Annotation { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn model_round_trip_and_corruption() {
        let m = |seed| PdrModel { cnn: Cnn::new(CnnArch::tiny(2, 3), seed), seed, meta: TrainingMeta::default() };
        let ens = PdrEnsemble { members: vec![m(1), m(2)] };
        let bytes = encode_ensemble(&ens, Some(&TrainConfig::default())).unwrap();
        let (back, cfg) = decode_ensemble(&bytes).unwrap();
        assert_eq!(cfg.unwrap().epochs, 200);
        assert_eq!(back.members.len(), 2);
        assert_eq!(back.members[1].cnn.params, ens.members[1].cnn.params);
        assert!(decode_ensemble(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(decode_ensemble(&bad), Err(Error::ModelFormat(_))));
    }
}
