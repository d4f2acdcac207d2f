//! Quantitative EEG background analysis.
//!
//! ```text
//! EDF ─ ingest ─ montage ─ rereference ─ 4 s epochs ─ multitaper PSD
//!        │                                   │
//!        │                      wake-epoch selection (eye events, 150 µV, ratio outliers)
//!        │                                   │
//!        └──────────── HBOS artifact detection + neighbor repair
//!                                            │
//!        band features ── PDR regression ── abnormality rules ── report + verification
//! ```

pub mod abnormality;
pub mod artifact;
pub mod config;
pub mod dpss;
pub mod error;
pub mod fsutil;
pub mod ingest;
pub mod montage;
pub mod pdr;
pub mod par;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
