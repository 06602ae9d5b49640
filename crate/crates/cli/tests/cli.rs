use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use tguard_core::checkpoint::Checkpoint;
use tguard_core::dfg::extract;
use tguard_core::fixtures::FULL_ADDER;
use tguard_core::gnn::Arch;
use tguard_core::verilog::SourceUnit;

const SMALL: [&str; 10] = [
    "--epochs", "3", "--hidden", "16", "--batch-size", "4", "--eval-every", "1", "--layers", "2",
];

fn tguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tguard"))
        .args(args)
        .env_remove("TG_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn clean_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../designs/clean")
}

/// Four clean designs plus eight variants in `tmp/ds`.
fn small_corpus(tmp: &Path) -> PathBuf {
    let clean = tmp.join("clean");
    std::fs::create_dir_all(&clean).unwrap();
    for name in ["crc16", "gcd", "pwm", "uart_tx"] {
        std::fs::copy(clean_dir().join(format!("{name}.v")), clean.join(format!("{name}.v"))).unwrap();
    }
    let ds = tmp.join("ds");
    let o = tguard(&["inject", "--clean", s(&clean), "--variants", "8", "--out", s(&ds)]);
    assert!(o.status.success(), "{}", stderr(&o));
    ds.join("manifest.json")
}

fn train_small(tmp: &Path, manifest: &Path, name: &str) -> PathBuf {
    let out = tmp.join(name);
    let mut args = vec!["train", "--manifest", s(manifest), "--arch", "gcn", "--out", s(&out)];
    args.extend(SMALL);
    let o = tguard(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn extract_full_adder_matches_library() {
    let tmp = TempDir::new().unwrap();
    let fa = tmp.path().join("full_adder.v");
    std::fs::write(&fa, FULL_ADDER).unwrap();
    let out = tmp.path().join("graphs");
    let o = tguard(&["extract", s(&fa), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("full_adder.graph.json")).unwrap();
    let (mut expected, _) = extract(&SourceUnit::single("fa.v", FULL_ADDER, "full_adder")).unwrap();
    expected.design = "full_adder".into();
    assert_eq!(text, expected.to_json());
    let table = stdout(&o);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 2, "{table}");
    assert!(rows[0].starts_with("design"));
    let cols: Vec<&str> = rows[1].split_whitespace().collect();
    assert_eq!(cols[..4], ["full_adder", "-", &expected.node_count().to_string(), &expected.edge_count().to_string()]);
}

#[test]
fn extract_batch_skips_failures() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("src");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("full_adder.v"), FULL_ADDER).unwrap();
    std::fs::write(dir.join("broken.v"), "module broken(input a, output b);\n  assign b = ;\nendmodule\n").unwrap();
    let out = tmp.path().join("graphs");
    let o = tguard(&["extract", s(&dir), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("full_adder.graph.json").exists());
    assert!(!out.join("broken.graph.json").exists());
    let err = stderr(&o);
    assert!(err.contains("broken") && err.contains(":2:"), "{err}");
}

#[test]
fn extract_missing_top_is_user_error() {
    let tmp = TempDir::new().unwrap();
    let fa = tmp.path().join("full_adder.v");
    std::fs::write(&fa, FULL_ADDER).unwrap();
    let o = tguard(&["extract", s(&fa), "--top", "nope", "--out", s(&tmp.path().join("g"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown module `nope`"));
}

#[test]
fn extract_refuses_overwrite_and_is_repeatable() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("g");
    let dir = clean_dir();
    assert!(tguard(&["--jobs", "2", "extract", s(&dir), "--out", s(&out)]).status.success());
    let first = std::fs::read(out.join("uart_rx.graph.json")).unwrap();
    let again = tguard(&["extract", s(&dir), "--out", s(&out)]);
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--force"));
    assert!(tguard(&["--force", "extract", s(&dir), "--out", s(&out)]).status.success());
    assert_eq!(std::fs::read(out.join("uart_rx.graph.json")).unwrap(), first);
}

#[test]
fn graph_cache_gives_same_output() {
    let tmp = TempDir::new().unwrap();
    let cache = tmp.path().join("cache");
    let fa = clean_dir().join("fir4.v");
    let run = |out: &Path| {
        let o = Command::new(env!("CARGO_BIN_EXE_tguard"))
            .args(["extract", s(&fa), "--out", s(out)])
            .env("TG_CACHE_DIR", &cache)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("fir4.graph.json")).unwrap()
    };
    let cold = run(&tmp.path().join("a"));
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
    assert_eq!(run(&tmp.path().join("b")), cold);
}

#[test]
fn inject_prints_distribution_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_corpus(tmp.path());
    let first = std::fs::read(&manifest).unwrap();
    let clean = tmp.path().join("clean");
    let ds = manifest.parent().unwrap();
    let o = tguard(&["--force", "inject", "--clean", s(&clean), "--variants", "8", "--out", s(ds)]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("class 0 (TjFree): 4"), "{out}");
    assert!(out.contains("class 1 (TjIn):   8"), "{out}");
    assert_eq!(std::fs::read(&manifest).unwrap(), first);
    let bad = tguard(&["inject", "--clean", s(&clean), "--templates", "nope", "--out", s(&tmp.path().join("x"))]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_writes_checkpoint_and_curve() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_corpus(tmp.path());
    let a = train_small(tmp.path(), &manifest, "a.tgm");
    let b = train_small(tmp.path(), &manifest, "b.tgm");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let ckpt = Checkpoint::load(&a).unwrap();
    assert_eq!(ckpt.config.arch, Arch::Gcn);
    assert_eq!(ckpt.config.num_layers, 2);
    let curve = std::fs::read_to_string(tmp.path().join("a.curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);
    assert!(curve.starts_with("epoch,train_loss,"));

    let o = tguard(&["train", "--manifest", s(&manifest), "--layers", "0", "--out", s(&tmp.path().join("z.tgm"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("num_layers"));
}

#[test]
fn quantize_eval_predict() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_corpus(tmp.path());
    let fp = train_small(tmp.path(), &manifest, "m.tgm");
    let q4 = tmp.path().join("m.q4.tgm");
    let o = tguard(&["quantize", "--in", s(&fp), "--out", s(&q4)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(Checkpoint::load(&q4).unwrap().is_quantized());

    let report = tmp.path().join("r.json");
    let o = tguard(&["eval", "--model", s(&fp), "--manifest", s(&manifest), "--compare", "--out", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["mode"], "holdout");
    assert!(v["q4"]["folds"].is_array());
    let csv = std::fs::read_to_string(tmp.path().join("r.csv")).unwrap();
    assert!(csv.contains(",GCN,2,") && csv.contains(",GCN-q4,2,"));

    let o = tguard(&["eval", "--model", s(&q4), "--manifest", s(&manifest), "--compare", "--out", s(&tmp.path().join("q.json"))]);
    assert_eq!(o.status.code(), Some(2));

    let graphs = tmp.path().join("g");
    assert!(tguard(&["extract", s(&clean_dir().join("gcd.v")), "--out", s(&graphs)]).status.success());
    let o = tguard(&["predict", "--model", s(&q4), "--graph", s(&graphs.join("gcd.graph.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let parts: Vec<&str> = line.trim().split(", ").collect();
    assert_eq!(parts[0], "gcd");
    let p: f64 = parts[1].parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(["clean", "trojan"].contains(&parts[2]));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\"nodes\": [").unwrap();
    assert_eq!(tguard(&["predict", "--model", s(&fp), "--graph", s(&bad)]).status.code(), Some(2));
}

#[test]
fn kfold_is_independent_of_jobs() {
    let tmp = TempDir::new().unwrap();
    let manifest = small_corpus(tmp.path());
    let fp = train_small(tmp.path(), &manifest, "m.tgm");
    let run = |jobs: &str, name: &str| {
        let out = tmp.path().join(name);
        let o = tguard(&[
            "--jobs", jobs, "eval", "--model", s(&fp), "--manifest", s(&manifest), "--mode", "kfold", "--folds", "3",
            "--compare", "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let one = run("1", "k1.json");
    assert_eq!(run("3", "k3.json"), one);
    let v: serde_json::Value = serde_json::from_slice(&one).unwrap();
    assert_eq!(v["mode"], "kfold");
    assert_eq!(v["folds"].as_array().unwrap().len(), 3);
}
