use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn langgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langgate")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = langgate(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn jsonl(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// A synthetic model dir plus a small trace and a trained gate.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&["synth", "--out", s(&root.join("model"))]);
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn model(&self) -> String {
        format!("synthetic:{}", self.path("model").display())
    }

    fn record(&self) -> PathBuf {
        let trace = self.path("trace");
        let m = self.model();
        ok(&["record", "--model", &m, "--sequences", "16", "--steps", "32", "--M", "64", "--out", s(&trace)]);
        trace
    }

    fn train(&self, trace: &Path, name: &str, extra: &[&str]) -> PathBuf {
        let gate = self.path(name);
        let mut args = vec!["train-gate", "--trace", s(trace), "--d-hidden", "16", "--epochs", "5", "--out", s(&gate)];
        args.extend_from_slice(extra);
        ok(&args);
        gate
    }

    fn permissive_gate(&self) -> PathBuf {
        let d_in = 64;
        let gate = json!({
            "d_in": d_in,
            "d_hidden": 1,
            "family_order": ["cj", "latin", "symbols", "lowres"],
            "W1": [vec![0.0; d_in]],
            "b1": [0.0],
            "W2": [[0.0], [0.0], [0.0], [0.0]],
            "b2": [10.0, 10.0, 10.0, 10.0],
            "threshold": 0.5
        });
        let p = self.path("permissive.json");
        std::fs::write(&p, gate.to_string()).unwrap();
        p
    }
}

#[test]
fn classify_toy_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = dir.path().join("vocab.jsonl");
    // 中, "Hi", "!", and the partial [E4, B8]
    std::fs::write(
        &vocab,
        "{\"id\":0,\"bytes_hex\":\"e4b8ad\"}\n{\"id\":1,\"bytes_hex\":\"4869\"}\n{\"id\":2,\"bytes_hex\":\"21\"}\n{\"id\":3,\"bytes_hex\":\"e4b8\"}\n",
    )
    .unwrap();
    let out = dir.path().join("classes.jsonl");
    let summary = ok(&["classify-vocab", "--vocab", s(&vocab), "--out", s(&out), "--summary"]);
    assert!(summary.contains("total\t4"), "{summary}");
    assert!(summary.contains("cj\t2"), "{summary}");
    let records = jsonl(&std::fs::read_to_string(&out).unwrap());
    let families: Vec<&str> = records.iter().filter_map(|r| r["family"].as_str()).collect();
    assert_eq!(families, ["cj", "latin", "symbols", "cj"]);
}

#[test]
fn malformed_hex_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = dir.path().join("vocab.jsonl");
    std::fs::write(&vocab, "{\"id\":0,\"bytes_hex\":\"zz\"}\n").unwrap();
    let out = langgate(&["classify-vocab", "--vocab", s(&vocab)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bytes_hex"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(langgate(&["decode"]).status.code(), Some(1));
    assert_eq!(langgate(&["no-such-command"]).status.code(), Some(1));
    let f = Fixture::new();
    let m = f.model();
    let out = langgate(&["decode", "--model", &m, "--rules", "9"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let out = langgate(&["decode", "--model", &m, "--top-p", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_defaults() {
    let help = ok(&["decode", "--help"]);
    for needle in ["[default: 20]", "[default: 0.95]", "[default: all]", "--threshold"] {
        assert!(help.contains(needle), "missing {needle}:\n{help}");
    }
    let help = ok(&["train-gate", "--help"]);
    for needle in ["[default: 0.01]", "[default: 64]", "[default: 256]"] {
        assert!(help.contains(needle), "missing {needle}:\n{help}");
    }
}

#[test]
fn record_train_decode() {
    let f = Fixture::new();
    let trace = f.record();
    for name in ["meta.json", "vocab.jsonl", "steps.jsonl"] {
        assert!(trace.join(name).exists(), "{name}");
    }
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(trace.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["M"], 64);
    assert_eq!(std::fs::read_to_string(trace.join("steps.jsonl")).unwrap().lines().count(), 16 * 32);

    let history = f.path("history.jsonl");
    let gate = f.train(&trace, "gate.json", &["--history", s(&history)]);
    let epochs = jsonl(&std::fs::read_to_string(&history).unwrap());
    assert_eq!(epochs.len(), 6);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&gate).unwrap()).unwrap();
    assert_eq!(file["W1"].as_array().unwrap().len(), 16);
    assert_eq!(file["threshold"], 0.5);

    let m = f.model();
    let out = f.path("decode.jsonl");
    ok(&["decode", "--model", &m, "--gate", s(&gate), "--sequences", "3", "--max-steps", "20", "--out", s(&out)]);
    let lines = jsonl(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(lines.iter().filter(|l| l.get("token_id").is_some()).count(), 60);
    assert_eq!(lines.iter().filter(|l| l.get("text").is_some()).count(), 3);
    assert_eq!(lines.last().unwrap()["summary"]["steps"], 60);

    let stats: Value = serde_json::from_str(&ok(&["stats", "--outcomes", s(&out), "--format", "json"])).unwrap();
    assert_eq!(stats["decode"]["steps"], 60);
    assert_eq!(stats["confusion_points"]["steps"], 60);
}

#[test]
fn permissive_gate_changes_nothing() {
    let f = Fixture::new();
    let m = f.model();
    let gate = f.permissive_gate();
    let plain = ok(&["decode", "--model", &m, "--sequences", "4", "--max-steps", "50", "--seed", "5"]);
    let gated = ok(&["decode", "--model", &m, "--sequences", "4", "--max-steps", "50", "--seed", "5", "--gate", s(&gate)]);
    let tokens = |t: &str| -> Vec<Value> { jsonl(t).into_iter().filter_map(|l| l.get("tokens").cloned()).collect() };
    assert_eq!(tokens(&plain), tokens(&gated));
    assert_eq!(jsonl(&gated).last().unwrap()["summary"]["interventions"], 0);
}

#[test]
fn zero_learning_rate_and_fixed_seed() {
    let f = Fixture::new();
    let trace = f.record();
    let history = f.path("flat.jsonl");
    f.train(&trace, "flat.json", &["--lr", "0", "--history", s(&history)]);
    let losses: Vec<f64> = jsonl(&std::fs::read_to_string(&history).unwrap())
        .iter()
        .map(|e| e["train_loss"].as_f64().unwrap())
        .collect();
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");

    let a = f.train(&trace, "a.json", &["--seed", "3"]);
    let b = f.train(&trace, "b.json", &["--seed", "3"]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn eval_counts_and_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let responses = dir.path().join("responses.jsonl");
    std::fs::write(
        &responses,
        [
            json!({"id": 1, "text": "שלום 中", "reference": "שלום"}),
            json!({"id": 2, "text": "שלום iPhone", "reference": "שלום iPhone"}),
            json!({"id": 3, "text": "שלום 123", "reference": "שלום"}),
        ]
        .iter()
        .map(|v| v.to_string() + "\n")
        .collect::<String>(),
    )
    .unwrap();
    let out: Value = serde_json::from_str(&ok(&["eval", "--responses", s(&responses), "--partition", "--format", "json"])).unwrap();
    assert_eq!(out["n"], 3);
    assert_eq!(out["cj_percent"], 33.33);
    assert_eq!(out["latin_count"], 1);
    assert_eq!(out["no_latin"]["n"], 2);
    assert_eq!(out["with_latin"]["latin_percent"], 100.0);

    let text = ok(&["eval", "--responses", s(&responses), "--family", "cj"]);
    assert_eq!(text.trim(), "all: cj 33.33% (1/3)");
}

#[test]
fn specdec_matches_autoregressive() {
    let f = Fixture::new();
    let trace = f.record();
    let gate = f.train(&trace, "gate.json", &[]);
    let m = f.model();
    for gamma in ["1", "4"] {
        let out: Value = serde_json::from_str(&ok(&[
            "specdec", "--draft", &m, "--target", &m, "--gate", s(&gate), "--gamma", gamma, "--sequences", "2",
            "--max-steps", "40",
        ]))
        .unwrap();
        for r in out.as_array().unwrap() {
            assert_eq!(r["matches_autoregressive"], true);
            assert_eq!(r["tokens"].as_array().unwrap().len(), 40);
            assert_eq!(r["accepted"], r["proposed"]);
        }
    }
}

#[test]
fn norm_report_on_synthetic_vocab() {
    let f = Fixture::new();
    let vocab = f.path("model").join("vocab.jsonl");
    let out: Value = serde_json::from_str(&ok(&["norm-report", "--vocab", s(&vocab), "--format", "json"])).unwrap();
    let cj = out["cj"].as_f64().unwrap();
    let lowres = out["lowres"].as_f64().unwrap();
    assert!(cj > lowres, "{out}");
}
