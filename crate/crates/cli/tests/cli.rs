use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use fsad_core::data::MANIFEST_FILE;
use fsad_core::training::Preset;
use serde_json::Value;
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_fsad");

fn fsad(root: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("FSAD_OUTPUT_ROOT", root).output().expect("spawn fsad")
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = fsad(root, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// Desk-sized corpus with a one-epoch encoder, so the fixture stays quick.
fn quick_config(dir: &Path) -> PathBuf {
    let mut p = Preset::builtin("desk").unwrap();
    p.name = "quick".into();
    p.train.stage1_epochs = 1;
    p.train.stage2_epochs = 5;
    p.train.embed_dim = 32;
    let path = dir.join("quick.json");
    fs::write(&path, serde_json::to_string_pretty(&p).unwrap()).unwrap();
    path
}

/// Output root holding a corpus and a `--stage all --k 40` run.
fn trained_root() -> &'static Path {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let root = scratch("trained");
        let cfg = quick_config(&root);
        ok(&root, &["generate-data", "--config", s(&cfg)]);
        ok(&root, &["train", "--stage", "all", "--config", s(&cfg), "--k", "40"]);
        root
    })
}

#[test]
fn zero_patients_give_an_empty_manifest() {
    let root = scratch("zero");
    ok(&root, &["generate-data", "--preset", "smoke", "--patients", "0"]);
    let m = json(&root.join("corpus").join(MANIFEST_FILE));
    assert_eq!(m["frames"].as_array().unwrap().len(), 0);
}

#[test]
fn same_seed_gives_same_fingerprint_and_expected_count() {
    let root = scratch("fingerprint");
    for out in ["a", "b"] {
        ok(&root, &["generate-data", "--preset", "smoke", "--seed", "9", "--out", s(&root.join(out))]);
    }
    let (a, b) = (json(&root.join("a").join(MANIFEST_FILE)), json(&root.join("b").join(MANIFEST_FILE)));
    assert_eq!(a["fingerprint"], b["fingerprint"]);
    let smoke = Preset::builtin("smoke").unwrap().data.synth;
    let kept = a["frames"].as_array().unwrap().len() as u64;
    assert_eq!(kept + a["dropped_blurred"].as_u64().unwrap(), (smoke.n_patients * smoke.frames_per_patient) as u64);
    ok(&root, &["generate-data", "--preset", "smoke", "--seed", "10", "--out", s(&root.join("c"))]);
    assert_ne!(a["fingerprint"], json(&root.join("c").join(MANIFEST_FILE))["fingerprint"]);
}

#[test]
fn stage_sin_without_encoder_reports_missing_input() {
    let root = scratch("no_encoder");
    let out = fsad(&root, &["train", "--stage", "sin", "--preset", "smoke"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("encoder"));
}

#[test]
fn exit_codes_are_distinct() {
    let root = scratch("codes");
    let k0 = fsad(&root, &["train", "--stage", "all", "--preset", "smoke", "--k", "0"]);
    assert_eq!(k0.status.code(), Some(2));
    let missing_model = fsad(&root, &["evaluate", "--preset", "smoke"]);
    assert_eq!(missing_model.status.code(), Some(4));
    let bad = root.join("bad.json");
    let mut p = Preset::builtin("smoke").unwrap();
    p.train.batch_size = 0;
    fs::write(&bad, serde_json::to_string(&p).unwrap()).unwrap();
    let invalid = fsad(&root, &["train", "--config", s(&bad)]);
    assert_eq!(invalid.status.code(), Some(2));

    // an encoder-only checkpoint is a contract violation for plain evaluation
    ok(&root, &["generate-data", "--preset", "smoke"]);
    ok(&root, &["train", "--stage", "encoder", "--preset", "smoke"]);
    let encoder = root.join("encoder.json");
    assert_eq!(fsad(&root, &["evaluate", "--checkpoint", s(&encoder)]).status.code(), Some(3));
}

#[test]
fn train_manifest_records_k_and_hashes() {
    let root = trained_root();
    let m = json(&root.join("run_train_all.json"));
    assert_eq!(m["k_abnormal"], 40);
    assert_eq!(m["dataset_fingerprint"], json(&root.join("corpus").join(MANIFEST_FILE))["fingerprint"]);
    let artifacts = m["artifacts"].as_array().unwrap();
    for name in ["config.json", "encoder.json", "encoder.bin", "model.json", "model.bin", "sin_log.ndjson"] {
        assert!(artifacts.iter().any(|a| a["path"] == name), "{name} not listed");
    }
    for a in artifacts {
        let bytes = fs::read(root.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn evaluation_is_repeatable_and_prints_the_json_auc() {
    let trained = trained_root();
    let root = scratch("evaluate");
    for f in ["config.json", "model.json", "model.bin"] {
        fs::copy(trained.join(f), root.join(f)).unwrap();
    }
    let data = trained.join("corpus");
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let stdout = ok(&root, &["evaluate", "--data", s(&data)]);
        let metrics = fs::read(root.join("eval/metrics.json")).unwrap();
        let scores = fs::read(root.join("eval/scores.csv")).unwrap();
        outputs.push((stdout, metrics, scores));
    }
    assert_eq!(outputs[0], outputs[1]);
    let printed: f64 = outputs[0].0.lines().find_map(|l| l.strip_prefix("AUC: ")).unwrap().parse().unwrap();
    let summary = json(&root.join("eval/metrics.json"));
    assert_eq!(summary["auc"].as_f64().unwrap(), printed);
    assert_eq!(summary["k_abnormal"], 40);
    let run = json(&root.join("eval/run_evaluate.json"));
    assert!(run["artifacts"].as_array().unwrap().iter().any(|a| a["path"] == "metrics.json"));
}

#[test]
fn sweep_reports_every_k() {
    let trained = trained_root();
    let root = scratch("sweep");
    fs::copy(trained.join("config.json"), root.join("config.json")).unwrap();
    let (encoder, data) = (trained.join("encoder.json"), trained.join("corpus"));
    let args = [
        "evaluate",
        "--checkpoint",
        s(&encoder),
        "--data",
        s(&data),
        "--sweep",
        "10,20,30,40,50,60,70,80",
        "--repeats",
        "3",
    ];
    let stdout = ok(&root, &args);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("k=")).count(), 8);
    let sweep = &json(&root.join("eval/metrics.json"))["sweep"];
    let entries = sweep["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 8);
    for (e, k) in entries.iter().zip((10..=80).step_by(10)) {
        assert_eq!(e["k"], k);
        assert_eq!(e["aucs"].as_array().unwrap().len(), 3);
    }
    assert!(root.join("eval/auc_vs_k.svg").is_file());
}
