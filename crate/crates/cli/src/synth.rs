use std::path::PathBuf;

use anyhow::Result;
use clap::{Subcommand, ValueEnum};
use eegbg::ingest::save_recording;
use eegbg::pdr::io::write_dataset;
use eegbg::pdr::synthetic::{synthetic_corpus, CorpusConfig};
use eegbg::synth::{synth_recording, Fixture};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Normal,
    LeftTemporalTheta,
    F3Pulses,
}

impl From<Kind> for Fixture {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Normal => Fixture::Normal,
            Kind::LeftTemporalTheta => Fixture::LeftTemporalTheta,
            Kind::F3Pulses => Fixture::F3Pulses,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    /// Write a synthetic 19-channel EDF recording.
    Recording {
        #[arg(long, value_enum, default_value = "normal")]
        kind: Kind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 600.0)]
        duration: f64,
        /// Output EDF path.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write a labelled PDR feature-map corpus and its manifest.
    PdrCorpus {
        /// Recordings; each yields a left and a right example.
        #[arg(long, default_value_t = 500)]
        files: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
}

pub fn run(cmd: SynthCommand) -> Result<()> {
    match cmd {
        SynthCommand::Recording { kind, seed, duration, out } => {
            let rec = synth_recording(&Fixture::from(kind).config(seed, duration));
            save_recording(&rec, &out)?;
            println!("{}", out.display());
        }
        SynthCommand::PdrCorpus { files, seed, out } => {
            let data = synthetic_corpus(&CorpusConfig { n_files: files, seed, ..Default::default() });
            println!("{}", write_dataset(&out, &data)?.display());
        }
    }
    Ok(())
}
