//! End-to-end runs of the `ccrcnn` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "synth": { "total_length": 200000, "event_count": 40 },
  "train": { "epochs": 1, "max_segments_per_epoch": 2 }
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ccrcnn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ccrcnn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.json");
    fs::write(&p, SMALL).unwrap();
    p
}

fn synth(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let cfg = small_config(dir);
    let out = dir.join(name);
    let o = run(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        seed,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a", "7");
    let b = synth(dir.path(), "b", "7");
    for f in [
        "waveform.wv1d",
        "events.csv",
        "manifest.json",
        "config.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let c = synth(dir.path(), "c", "8");
    assert_ne!(
        fs::read(a.join("waveform.wv1d")).unwrap(),
        fs::read(c.join("waveform.wv1d")).unwrap()
    );
}

#[test]
fn eval_of_ground_truth_detections_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d", "3");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    let events = fs::read_to_string(data.join("events.csv")).unwrap();
    let rows: Vec<&str> = events.lines().skip(1).collect();
    let mut dets = String::from("begin,end,score,scale\n");
    for i in manifest["splits"]["test"].as_array().unwrap() {
        let row = rows[i.as_u64().unwrap() as usize];
        let mut parts = row.split(',');
        let (b, e) = (parts.next().unwrap(), parts.next().unwrap());
        dets.push_str(&format!("{b},{e},1.0,-1\n"));
    }
    let det_path = dir.path().join("oracle.csv");
    fs::write(&det_path, dets).unwrap();
    let out = dir.path().join("eval");
    let o = run(&[
        "eval",
        "--data",
        s(&data.join("manifest.json")),
        "--detections",
        s(&det_path),
        "--out",
        s(&out),
        "--plot",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["map"].as_f64(), Some(1.0));
    assert_eq!(report["ap_per_threshold"].as_array().unwrap().len(), 10);
    assert!(out.join("pr.svg").exists());
}

#[test]
fn train_detect_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d", "5");
    let manifest = data.join("manifest.json");
    let cfg = small_config(dir.path());
    let tr = dir.path().join("train");
    let o = run(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&manifest),
        "--out",
        s(&tr),
        "--plot",
        "--alpha",
        "0.55",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "model.ccr",
        "metrics.csv",
        "config.json",
        "metrics.svg",
        "test_report.json",
    ] {
        assert!(tr.join(f).exists(), "{f}");
    }
    let echoed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tr.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["model"]["loss"]["alpha"].as_f64(), Some(0.55));
    assert_eq!(echoed["train"]["epochs"].as_u64(), Some(1));

    let model = tr.join("model.ccr");
    let det = dir.path().join("det");
    let o = run(&[
        "detect",
        "--data",
        s(&manifest),
        "--model",
        s(&model),
        "--out",
        s(&det),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(det.join("detections.csv"))
        .unwrap()
        .starts_with("begin,end,score,scale"));

    let ev = dir.path().join("ev");
    let o = run(&[
        "eval",
        "--data",
        s(&manifest),
        "--model",
        s(&model),
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(ev.join("report.json")).unwrap(),
        fs::read_to_string(tr.join("test_report.json")).unwrap()
    );

    // the checkpoint does not fit a model configured without context
    let o = run(&[
        "eval",
        "--data",
        s(&manifest),
        "--model",
        s(&model),
        "--no-context",
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn tm_baseline_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d", "4");
    let out = dir.path().join("tm");
    let o = run(&[
        "tm-baseline",
        "--data",
        s(&data.join("manifest.json")),
        "--mu",
        "8",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report.json").exists());
    assert!(out.join("detections.csv").exists());
    let o = run(&[
        "tm-baseline",
        "--data",
        s(&data.join("manifest.json")),
        "--mu=-1",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gradcheck_passes_with_few_trials() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gradcheck", "--trials", "2", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("desk context+heads"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&run(&["synth", "--bogus"])), 1);
    assert_eq!(
        code(&run(&["synth", "--scales", "3..1", "--out", s(&out)])),
        1
    );
    assert_eq!(
        code(&run(&["synth", "--scales", "0..9", "--out", s(&out)])),
        1
    );
    assert_eq!(code(&run(&["--help"])), 0);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"epochz": 3}}"#).unwrap();
    assert_eq!(
        code(&run(&["synth", "--config", s(&bad), "--out", s(&out)])),
        1
    );

    let missing = dir.path().join("nope/manifest.json");
    assert_eq!(
        code(&run(&[
            "tm-baseline",
            "--data",
            s(&missing),
            "--out",
            s(&out)
        ])),
        2
    );
}
