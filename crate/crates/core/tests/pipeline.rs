use std::fs;

use eegbg::config::PipelineConfig;
use eegbg::ingest::{load_recording, save_recording, Annotation};
use eegbg::pipeline::{analyze, PdrSource};
use eegbg::preprocess::ExclusionReason;
use eegbg::synth::{synth_recording, Fixture, SynthConfig};
use eegbg::Error;
use tempfile::TempDir;

#[test]
fn edf_round_trip_keeps_the_findings() {
    let tmp = TempDir::new().unwrap();
    let cfg = PipelineConfig::default();
    for fx in [Fixture::Normal, Fixture::LeftTemporalTheta] {
        let rec = synth_recording(&fx.config(5, 240.0));
        let path = tmp.path().join("r.edf");
        save_recording(&rec, &path).unwrap();
        let direct = analyze(&rec, &cfg, None).unwrap();
        let via_edf = analyze(&load_recording(&path).unwrap(), &cfg, None).unwrap();
        assert_eq!(direct.report_features, via_edf.report_features, "{fx:?}");
        assert_eq!(direct.findings.focal_electrodes, via_edf.findings.focal_electrodes);
    }
}

#[test]
fn extra_channels_and_aliases() {
    let mut rec = synth_recording(&SynthConfig { duration_s: 120.0, extra_channels: true, ..Default::default() });
    for ch in rec.channels.iter_mut() {
        if ch == "T3" {
            *ch = "EEG T7-REF".into();
        }
        if ch == "Cz" {
            *ch = "VERTEX".into();
        }
    }
    let cfg = PipelineConfig::default();
    match analyze(&rec, &cfg, None) {
        Err(Error::MissingChannels(m)) => assert_eq!(m, vec!["Cz".to_string()]),
        other => panic!("expected missing Cz, got {other:?}"),
    }
    let cfg = PipelineConfig::from_toml_str("[montage.aliases]\nVERTEX = \"Cz\"\n").unwrap();
    let a = analyze(&rec, &cfg, None).unwrap();
    assert!(a.findings.is_normal());
}

#[test]
fn eye_annotations_and_crop() {
    let mut cfg = SynthConfig { duration_s: 200.0, ..Default::default() };
    cfg.annotations = vec![
        Annotation { onset_s: 9.0, label: "Eyes Open".into() },
        Annotation { onset_s: 41.0, label: "EC".into() },
        Annotation { onset_s: 61.0, label: "spec check".into() },
    ];
    let rec = synth_recording(&cfg);
    let a = analyze(&rec, &PipelineConfig::default(), None).unwrap();
    let eye: Vec<usize> = a
        .selection
        .reasons
        .iter()
        .enumerate()
        .filter(|(_, r)| **r == Some(ExclusionReason::EyeAnnotation))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(eye, vec![2, 10]);

    let cropped = PipelineConfig { crop_seconds: Some(100.0), ..Default::default() };
    let a = analyze(&rec, &cropped, None).unwrap();
    assert_eq!(a.features.total_epochs, 25);
}

#[test]
fn rest_reference_from_file() {
    let tmp = TempDir::new().unwrap();
    let n = 19;
    // identity transfer matrix leaves the data as recorded
    let text: String = (0..n)
        .map(|i| (0..n).map(|j| if i == j { "1" } else { "0" }).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    let path = tmp.path().join("g.txt");
    fs::write(&path, text).unwrap();
    let toml = format!("[reference]\nscheme = \"rest\"\ntransfer_matrix = \"{}\"\n", path.display());
    let rest = PipelineConfig::from_toml_str(&toml).unwrap();
    let none = PipelineConfig::from_toml_str("[reference]\nscheme = \"none\"\n").unwrap();
    let rec = synth_recording(&SynthConfig { duration_s: 120.0, ..Default::default() });
    let a = analyze(&rec, &rest, None).unwrap();
    let b = analyze(&rec, &none, None).unwrap();
    assert_eq!(a.psd, b.psd);

    fs::write(&path, "1 0\n0 1\n").unwrap();
    assert!(matches!(analyze(&rec, &rest, None), Err(Error::Dimension(_))));
}

#[test]
fn repair_arms_differ_only_in_repaired_entries() {
    let rec = synth_recording(&Fixture::F3Pulses.config(3, 240.0));
    let repaired = analyze(&rec, &PipelineConfig::default(), None).unwrap();
    let skipped = analyze(&rec, &PipelineConfig { repair: false, ..Default::default() }, None).unwrap();
    assert_eq!(repaired.artifacts.mask, skipped.artifacts.mask);
    assert!(repaired.artifacts.n_flagged() > 0);
    assert_eq!(repaired.pdr_source, PdrSource::SpectralPeak);
    // with repair, every epoch still counts toward F3's average
    let f3 = repaired.psd.channel_index("F3").unwrap();
    let fp1 = repaired.psd.channel_index("Fp1").unwrap();
    assert_eq!(repaired.psd.power.row(fp1), skipped.psd.power.row(fp1));
    assert_ne!(repaired.psd.power.row(f3), skipped.psd.power.row(f3));
    assert!(repaired.findings.is_normal() && skipped.findings.is_normal());
}
