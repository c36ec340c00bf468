use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
folds = 3
threads = 1
mc_passes = 4
sweep = [{ g = 62, w = 66, c = 10 }]

[simulator]
sequences = 240
frames = 16

[backbone]
hidden = 8
aux_hidden = 4
epochs = 2

[classifier]
hidden = 8
head_hidden = 4
epochs = 2

[selector]
epochs = 5
"#;

fn chase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chase")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = chase(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_train_evaluate_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");

    let printed = ok(&["generate", "--config", s(&cfg), "--seed", "3", "--out", s(&data)]);
    assert!(printed.starts_with("240 sequences"));
    let again = tmp.path().join("data2");
    ok(&["generate", "--config", s(&cfg), "--seed", "3", "--out", s(&again)]);
    assert_eq!(fs::read(data.join("dataset.jsonl")).unwrap(), fs::read(again.join("dataset.jsonl")).unwrap());

    let summary = ok(&["train", "--config", s(&cfg), "--dataset", s(&data), "--coverage", "0.8,0.9", "--out", s(&run)]);
    assert!(summary.contains("Deep-Ensemble"));
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();

    ok(&["evaluate", "--out", s(&run)]);
    assert_eq!(fs::read_to_string(run.join("metrics.csv")).unwrap(), metrics);
    ok(&["report", "--out", s(&run), "--coverage", "0.7"]);
    let redone = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(redone.contains(",0.70,") && !redone.contains(",0.80,"), "{}", &redone[..200]);
}

#[test]
fn ablate_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let abl = tmp.path().join("abl");
    ok(&["ablate", "--variant", "l,F", "--config", s(&cfg), "--out", s(&abl)]);
    let csv = fs::read_to_string(abl.join("metrics.csv")).unwrap();
    let methods: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods.into_iter().collect::<Vec<_>>(), ["F", "L"]);

    let sw = tmp.path().join("sweep");
    let table = ok(&["sweep", "--config", s(&cfg), "--out", s(&sw)]);
    assert!(table.contains("| 62 | 66 | 10 |"), "{table}");
    assert!(sw.join("sweep.csv").exists());
}

#[test]
fn bad_input_exits_nonzero() {
    assert!(!chase(&["ablate", "--variant", "Q"]).status.success());
    assert!(!chase(&["train", "--coverage", "1.5"]).status.success());
    assert!(!chase(&["report", "--out", "/nonexistent/run"]).status.success());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            chase_core::harness::RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n > 0);
}
