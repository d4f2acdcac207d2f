use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const GEN_RESPONSE: &str = "=== EEG Findings ===\n- Focal slow waves over the left temporal region.\n=== Conclusion ===\nAbnormal EEG.\n=== Clinical Correlation ===\nFocal slowing suggests focal cerebral dysfunction.\n=== Advanced Strategies ===\n- Neuroimaging is recommended.\n";

fn eegbg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eegbg"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = eegbg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_json(out: &Output) -> Value {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().rev().find(|l| l.starts_with('{')).expect("error JSON on stderr");
    serde_json::from_str(line).unwrap()
}

fn synth(dir: &Path, kind: &str, name: &str) -> PathBuf {
    let p = dir.join(name);
    ok(&["synth", "recording", "--kind", kind, "--duration", "240", "-o", s(&p)]);
    p
}

/// Config with a mock generator and three mock verifiers, one of which
/// never answers parseably.
fn mock_config(dir: &Path) -> PathBuf {
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        fs::write(&p, serde_json::json!({ "default": body }).to_string()).unwrap();
        p
    };
    let g = write("gen.json", GEN_RESPONSE);
    let v1 = write("v1.json", "Answer: [0, 1]");
    let v2 = write("v2.json", "The answer is [0, 1].");
    let v3 = write("v3.json", "no idea");
    let mut toml = format!(
        "[llm.generator]\nbase_url = \"mock:{}\"\nmodel = \"gen\"\napi_key_env = \"EEGBG_TEST_UNUSED\"\n",
        g.display()
    );
    for (i, v) in [v1, v2, v3].iter().enumerate() {
        toml.push_str(&format!(
            "[[llm.verifiers]]\nbase_url = \"mock:{}\"\nmodel = \"verifier{i}\"\napi_key_env = \"EEGBG_TEST_UNUSED\"\n",
            v.display()
        ));
    }
    let p = dir.join("mock.toml");
    fs::write(&p, toml).unwrap();
    p
}

fn features(dir: &Path, id: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{id}.features.json"))).unwrap()).unwrap()
}

#[test]
fn normal_fixture_has_no_findings_and_no_llm_needs_no_network() {
    let tmp = TempDir::new().unwrap();
    let edf = synth(tmp.path(), "normal", "normal.edf");
    // a generator that could only be reached over the network, without credentials
    let cfg = tmp.path().join("net.toml");
    fs::write(
        &cfg,
        "[llm.generator]\nbase_url = \"http://127.0.0.1:9\"\nmodel = \"m\"\napi_key_env = \"EEGBG_TEST_NOT_SET\"\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    ok(&["-c", s(&cfg), "analyze", s(&edf), "--no-llm", "-o", s(&out)]);
    let f = features(&out, "normal");
    assert_eq!(f["abnormalFindings"], serde_json::json!([]));
    assert!(!out.join("normal.report.txt").exists());

    // without --no-llm the missing credential is a configuration error
    let run = eegbg(&["-c", s(&cfg), "analyze", s(&edf), "-o", s(&tmp.path().join("o2"))]);
    assert_eq!(run.status.code(), Some(1));
    assert_eq!(error_json(&run)["error"]["kind"], "config");
}

#[test]
fn focal_fixture_with_mock_llm_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let edf = synth(tmp.path(), "left-temporal-theta", "focal.edf");
    let cfg = mock_config(tmp.path());
    let out = tmp.path().join("out");
    let run = |extra: &[&str]| {
        let mut a = vec!["-c", s(&cfg), "analyze", s(&edf), "-o", s(&out), "--export-psd", "--export-mask"];
        a.extend_from_slice(extra);
        ok(&a);
        let mut names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        names.into_iter().map(|p| (p.clone(), fs::read(p).unwrap())).collect::<Vec<_>>()
    };
    let first = run(&[]);
    assert_eq!(first.len(), 6);
    let f = features(&out, "focal");
    let finding = f["abnormalFindings"][0].as_str().unwrap();
    assert!(finding.contains("Focal slow waves"), "{finding}");
    assert!(finding.contains("left"), "{finding}");
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("focal.verify.json")).unwrap()).unwrap();
    assert_eq!(v["majority"], serde_json::json!([0, 1]));
    assert_eq!(v["unresolved"], false);
    assert_eq!(fs::read_to_string(out.join("focal.report.txt")).unwrap(), GEN_RESPONSE);
    let prov: Value = serde_json::from_str(&fs::read_to_string(out.join("focal.provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["inputs"][0]["role"], "recording");
    assert_eq!(prov["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(prov["timestamp"], "2023-11-14T22:13:20Z");

    // results are append-only unless --overwrite
    let again = eegbg(&["-c", s(&cfg), "analyze", s(&edf), "-o", s(&out)]);
    assert_eq!(again.status.code(), Some(1));
    let second = run(&["--overwrite"]);
    assert_eq!(first, second, "outputs differ between identical runs");
}

#[test]
fn input_errors_exit_1_with_json() {
    let tmp = TempDir::new().unwrap();
    let run = eegbg(&["analyze", s(&tmp.path().join("missing.edf")), "--no-llm"]);
    assert_eq!(run.status.code(), Some(1));
    assert_eq!(error_json(&run)["error"]["kind"], "io");

    let bad = tmp.path().join("bad.edf");
    fs::write(&bad, b"0       not an edf").unwrap();
    let run = eegbg(&["analyze", s(&bad), "--no-llm", "-o", s(tmp.path())]);
    assert_eq!(run.status.code(), Some(1));
    assert_eq!(error_json(&run)["error"]["exit_code"], 1);

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[thresholds]\nfocal_score = 0.0\n").unwrap();
    let run = eegbg(&["-c", s(&cfg), "analyze", s(&bad), "--no-llm"]);
    assert_eq!(run.status.code(), Some(1));
    assert_eq!(error_json(&run)["error"]["kind"], "config");

    let run = eegbg(&["analyze"]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn too_short_recording_is_a_pipeline_error() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("short.edf");
    ok(&["synth", "recording", "--duration", "2", "-o", s(&p)]);
    let run = eegbg(&["analyze", s(&p), "--no-llm", "-o", s(tmp.path())]);
    assert_eq!(run.status.code(), Some(2));
    assert_eq!(error_json(&run)["error"]["kind"], "invalid_parameter");
}

#[test]
fn batch_runs_every_recording() {
    let tmp = TempDir::new().unwrap();
    let inputs = tmp.path().join("in");
    fs::create_dir(&inputs).unwrap();
    synth(&inputs, "normal", "a.edf");
    synth(&inputs, "left-temporal-theta", "b.edf");
    let out = tmp.path().join("out");
    ok(&["batch", s(&inputs), "--no-llm", "-o", s(&out), "--workers", "2"]);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("batch_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["succeeded"], 2);
    assert_eq!(features(&out, "a")["abnormalFindings"], serde_json::json!([]));
    assert_eq!(features(&out, "b")["abnormalFindings"].as_array().unwrap().len(), 1);

    // a broken file fails only itself
    fs::write(inputs.join("c.edf"), b"junk").unwrap();
    let run = eegbg(&["batch", s(&inputs), "--no-llm", "-o", s(&tmp.path().join("out2"))]);
    assert_eq!(run.status.code(), Some(2));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out2/batch_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["succeeded"], 2);
    assert_eq!(summary["failed"], 1);
}

#[test]
fn eval_replays_confusion_matrix() {
    let out = ok(&["eval", "--confusion", "163,17,15,81"]);
    for (k, v) in [("F1", "0.835"), ("precision", "0.827"), ("recall", "0.844"), ("accuracy", "0.884")] {
        let line = out.lines().find(|l| l.starts_with(k)).unwrap();
        assert_eq!(line.split_whitespace().last(), Some(v), "{line}");
    }
}

#[test]
fn eval_from_csv_files() {
    let tmp = TempDir::new().unwrap();
    let w = |name: &str, rows: &[(&str, u8)]| {
        let p = tmp.path().join(name);
        let mut t = String::from("id,value\n");
        for (id, v) in rows {
            t.push_str(&format!("{id},{v}\n"));
        }
        fs::write(&p, t).unwrap();
        p
    };
    let labels = w("labels.csv", &[("a", 1), ("b", 0), ("c", 1), ("d", 0)]);
    let perfect = w("p.csv", &[("d", 0), ("c", 1), ("b", 0), ("a", 1)]);
    let worse = w("q.csv", &[("a", 0), ("b", 1), ("c", 1), ("d", 0)]);
    let out: Value = serde_json::from_str(&ok(&[
        "eval",
        "--predictions",
        s(&perfect),
        "--labels",
        s(&labels),
        "--compare",
        s(&worse),
        "--json",
    ]))
    .unwrap();
    for k in ["f1", "precision", "recall", "accuracy"] {
        assert_eq!(out["metrics"][k], 1.0);
    }
    assert_eq!(out["mcnemar"]["b"], 2);
    assert_eq!(out["mcnemar"]["c"], 0);
    // exact two-sided binomial: 2 · 0.5² = 0.5
    assert!((out["mcnemar"]["p_value"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let short = w("short.csv", &[("a", 1)]);
    let run = eegbg(&["eval", "--predictions", s(&short), "--labels", s(&labels)]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn train_pdr_is_deterministic_and_resumable() {
    let tmp = TempDir::new().unwrap();
    let corpus = tmp.path().join("corpus");
    ok(&["synth", "pdr-corpus", "--files", "24", "-o", s(&corpus)]);
    let manifest = corpus.join("manifest.csv");
    let train = |dir: &Path| {
        ok(&["train-pdr", s(&manifest), "-o", s(dir), "--seeds", "3,4,5", "--epochs", "2"]);
        fs::read(dir.join("train_metrics.json")).unwrap()
    };
    let a = tmp.path().join("a");
    let m1 = train(&a);
    let m2 = train(&tmp.path().join("b"));
    assert_eq!(m1, m2);
    let mut names: Vec<String> =
        fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(
        names,
        ["ensemble.json", "pdr-seed3.model", "pdr-seed4.model", "pdr-seed5.model", "train_metrics.json"]
    );
    // existing seed files are reused, so a rerun reproduces the metrics
    assert_eq!(train(&a), m1);

    let out: Value = serde_json::from_str(&ok(&[
        "eval-pdr",
        s(&manifest),
        "--model",
        s(&a.join("ensemble.json")),
    ]))
    .unwrap();
    assert_eq!(out["pooled"]["n"], 48);

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "file_id,side,label_hz,feature_path\n").unwrap();
    let run = eegbg(&["train-pdr", s(&empty), "-o", s(&tmp.path().join("c"))]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn report_and_verify_commands() {
    let tmp = TempDir::new().unwrap();
    let edf = synth(tmp.path(), "left-temporal-theta", "f.edf");
    let cfg = mock_config(tmp.path());
    ok(&["analyze", s(&edf), "--no-llm", "-o", s(tmp.path())]);
    ok(&["-c", s(&cfg), "report", s(&tmp.path().join("f.features.json"))]);
    assert_eq!(fs::read_to_string(tmp.path().join("f.report.txt")).unwrap(), GEN_RESPONSE);
    let v: Value = serde_json::from_str(&ok(&["-c", s(&cfg), "verify", s(&tmp.path().join("f.report.txt"))])).unwrap();
    assert_eq!(v["majority"], serde_json::json!([0, 1]));
    let agree: Value = serde_json::from_str(&ok(&[
        "eval",
        "--verifications",
        s(&tmp.path().join("f.verify.json")),
        "--json",
    ]))
    .unwrap();
    assert_eq!(agree["agreement"]["items"], 1);
}
