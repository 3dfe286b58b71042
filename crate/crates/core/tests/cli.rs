use std::path::Path;
use std::process::{Command, Output};

use grn_ppg::dataset::PulseDataset;
use grn_ppg::signal::Label;

fn grn_ppg(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grn-ppg"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn synth_reports_prevalence_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["--seed", "1", "synth", "--duration", "600", "--artifact-rate", "0.175"];
    let first = grn_ppg(&args, &a);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("artifact prevalence"));
    assert!(grn_ppg(&args, &b).status.success());
    for f in ["signal.csv", "intervals.json", "pulses.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ds = PulseDataset::read_csv(std::fs::File::open(a.join("pulses.csv")).unwrap()).unwrap();
    let prevalence = ds.count(Label::Artifact) as f64 / ds.len() as f64;
    assert!((0.155..=0.195).contains(&prevalence), "{prevalence}");
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(grn_ppg(&["synth", "--artifact-rate", "0.9"], out).status.code(), Some(2));
    let bad_model = grn_ppg(&["train", "--model", "bilstm"], out);
    assert_eq!(bad_model.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_model.stderr).contains("grn-transformer"));
    assert_eq!(grn_ppg(&["--no-such-flag"], out).status.code(), Some(2));
    let empty = out.join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(
        grn_ppg(&["preprocess", "--input", empty.to_str().unwrap()], out).status.code(),
        Some(3)
    );
    let cfg = out.join("typo.toml");
    std::fs::write(&cfg, "sed = 3\n").unwrap();
    assert_eq!(
        grn_ppg(&["--config", cfg.to_str().unwrap(), "synth"], out).status.code(),
        Some(2)
    );
}

#[test]
fn preprocess_writes_pulses_and_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    assert!(grn_ppg(&["synth", "--duration", "60"], &s).status.success());
    let p = dir.path().join("p");
    let o = grn_ppg(
        &[
            "preprocess",
            "--input",
            s.join("signal.csv").to_str().unwrap(),
            "--intervals",
            s.join("intervals.json").to_str().unwrap(),
        ],
        &p,
    );
    assert!(o.status.success());
    let ds = PulseDataset::read_csv(std::fs::File::open(p.join("pulses.csv")).unwrap()).unwrap();
    assert!(ds.len() > 60 && ds.is_fully_labeled());
    let rej: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("rejections.json")).unwrap()).unwrap();
    assert_eq!(rej["accepted"].as_u64(), Some(ds.len() as u64));
}

#[test]
fn train_then_evaluate_reproduces_stored_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "corpus_pulses = 700\n[run.train]\nmax_epochs = 3\n").unwrap();
    let t = dir.path().join("t");
    let o = grn_ppg(&["--config", cfg.to_str().unwrap(), "train", "--model", "grn-mlp"], &t);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(t.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["model"], "grn-mlp");
    assert_eq!(report["config"]["corpus_pulses"], 700);

    let e = dir.path().join("e");
    let o = grn_ppg(
        &[
            "evaluate",
            "--checkpoint",
            t.join("checkpoint").to_str().unwrap(),
            "--data",
            t.join("test_pulses.csv").to_str().unwrap(),
        ],
        &e,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ev: serde_json::Value = serde_json::from_slice(&std::fs::read(e.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(ev["report"]["metrics"], report["report"]["metrics"]);
    assert_eq!(ev["report"]["confusion"], report["report"]["confusion"]);
}

#[test]
fn evaluate_unlabeled_writes_predictions_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "corpus_pulses = 500\n").unwrap();
    let t = dir.path().join("t");
    assert!(grn_ppg(&["--config", cfg.to_str().unwrap(), "train", "--model", "knn"], &t).status.success());
    let s = dir.path().join("s");
    assert!(grn_ppg(&["synth"], &s).status.success());
    let p = dir.path().join("p");
    assert!(grn_ppg(&["preprocess", "--input", s.join("signal.csv").to_str().unwrap()], &p).status.success());
    let e = dir.path().join("e");
    let o = grn_ppg(
        &[
            "evaluate",
            "--checkpoint",
            t.join("checkpoint").to_str().unwrap(),
            "--data",
            p.join("pulses.csv").to_str().unwrap(),
        ],
        &e,
    );
    assert!(o.status.success());
    let ev: serde_json::Value = serde_json::from_slice(&std::fs::read(e.join("eval_report.json")).unwrap()).unwrap();
    assert!(ev["report"]["metrics"].is_null());
    let preds = std::fs::read_to_string(e.join("predictions.csv")).unwrap();
    assert!(preds.lines().count() > 30);
}

#[test]
fn compare_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "corpus_pulses = 800\n[run.train]\nmax_epochs = 2\n").unwrap();
    let c = dir.path().join("c");
    let o = grn_ppg(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "compare",
            "--models",
            "knn,mlp",
            "--portions",
            "0.5,1",
            "--seeds",
            "1,2",
        ],
        &c,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["aggregate.csv", "curves.csv", "claims.json", "config.json"] {
        assert!(c.join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read_dir(c.join("reports")).unwrap().count(), 8);
    let r = grn_ppg(&["report"], &c);
    assert!(r.status.success());
    let table = stdout(&r);
    assert!(table.contains("| knn | 0.5 |") && table.contains("| mlp | 1 |"));
}
