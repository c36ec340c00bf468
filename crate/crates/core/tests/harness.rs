use std::collections::BTreeMap;

use chase_core::harness::*;
use chase_core::simulator::{ambiguity_bin, generate_dataset, Label, SequenceRecord, SimConfig};

fn tiny_sim(seed: u64) -> SimConfig {
    SimConfig { sequences: 240, frames: 16, seed, ..SimConfig::default() }
}

fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig { folds: 3, threads: 1, simulator: tiny_sim(5), ..RunConfig::default() };
    cfg.backbone.hidden = 8;
    cfg.backbone.aux_hidden = 4;
    cfg.backbone.epochs = 2;
    cfg.classifier.hidden = 8;
    cfg.classifier.head_hidden = 4;
    cfg.classifier.epochs = 2;
    cfg.selector.epochs = 5;
    cfg.mc_passes = 4;
    cfg
}

fn records(seed: u64) -> Vec<SequenceRecord> {
    generate_dataset(&tiny_sim(seed)).unwrap().records
}

#[test]
fn folds_partition_the_data_by_pairs() {
    let recs = records(1);
    let folds = make_folds(&recs, 3, 9).unwrap();
    let by_id: BTreeMap<u64, &SequenceRecord> = recs.iter().map(|r| (r.id, r)).collect();
    let mut tests: Vec<u64> = Vec::new();
    for f in &folds {
        let mut all: Vec<u64> = f.train.iter().chain(&f.val).chain(&f.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..recs.len() as u64).collect::<Vec<_>>(), "fold {} is not a partition", f.fold);
        tests.extend(&f.test);
        // Both members of a pair land in the same split.
        for ids in [&f.train, &f.val, &f.test] {
            let mut pairs: BTreeMap<u64, usize> = BTreeMap::new();
            for id in ids.iter() {
                *pairs.entry(by_id[id].pair_id).or_default() += 1;
            }
            assert!(pairs.values().all(|&n| n == 2));
        }
        // Every (label, regime, bin) cell appears in the test split.
        let cells: std::collections::BTreeSet<_> =
            f.test.iter().map(|id| (by_id[id].label, by_id[id].regime, ambiguity_bin(by_id[id].alpha))).collect();
        assert_eq!(cells.len(), 16);
    }
    tests.sort_unstable();
    assert_eq!(tests.len(), recs.len());
    tests.dedup();
    assert_eq!(tests.len(), recs.len(), "test folds overlap");
}

#[test]
fn fold_strata_proportions_within_one_pair() {
    let recs = records(2);
    let k = 3;
    let folds = make_folds(&recs, k, 4).unwrap();
    let by_id: BTreeMap<u64, &SequenceRecord> = recs.iter().map(|r| (r.id, r)).collect();
    let mut global: BTreeMap<_, usize> = BTreeMap::new();
    for r in &recs {
        *global.entry((r.label, r.regime, ambiguity_bin(r.alpha))).or_default() += 1;
    }
    for f in &folds {
        let mut cnt: BTreeMap<_, usize> = BTreeMap::new();
        for id in &f.test {
            let r = by_id[id];
            *cnt.entry((r.label, r.regime, ambiguity_bin(r.alpha))).or_default() += 1;
        }
        for (cell, &n) in &global {
            let want = n as f64 / k as f64;
            assert!((cnt[cell] as f64 - want).abs() <= 1.0, "{cell:?}: {} vs {want}", cnt[cell]);
        }
        let val_share = f.val.len() as f64 / (f.val.len() + f.train.len()) as f64;
        assert!((val_share - VALIDATION_SHARE).abs() < 0.05);
    }
}

#[test]
fn folds_are_seeded() {
    let recs = records(3);
    assert_eq!(make_folds(&recs, 3, 1).unwrap(), make_folds(&recs, 3, 1).unwrap());
    assert_ne!(make_folds(&recs, 3, 1).unwrap(), make_folds(&recs, 3, 2).unwrap());
    assert!(matches!(make_folds(&recs, 40, 1), Err(chase_core::ChaseError::Config(_))));
}

#[test]
fn full_size_folds_hold_a_fifth_of_the_data() {
    let recs = generate_dataset(&SimConfig { frames: 4, ..SimConfig::default() }).unwrap().records;
    for f in make_folds(&recs, 5, 0).unwrap() {
        assert!((f.test.len() as i64 - 672).abs() <= 16, "{}", f.test.len());
    }
}

#[test]
fn normalization_uses_training_statistics() {
    let recs = records(4);
    let split = &make_folds(&recs, 3, 0).unwrap()[0];
    let data = FoldData::build(&recs, split).unwrap();
    let frames: Vec<&[f64; 6]> = data.train.iter().flat_map(|e| e.features.iter()).collect();
    for j in 0..6 {
        let n = frames.len() as f64;
        let mean = frames.iter().map(|f| f[j]).sum::<f64>() / n;
        let var = frames.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9, "feature {j} mean {mean}");
        // The first-frame change features are identically zero at t = 0, so
        // every column still has spread.
        assert!((var.sqrt() - 1.0).abs() < 1e-9, "feature {j} std {}", var.sqrt());
    }
    let by_id: BTreeMap<u64, &SequenceRecord> = recs.iter().map(|r| (r.id, r)).collect();
    let raw = &by_id[&split.test[0]].features;
    let normed = &data.test[0].features;
    for j in 0..6 {
        let want = (raw[3][j] - data.normalizer.mean[j]) / data.normalizer.std[j];
        assert_eq!(normed[3][j], want);
    }
    assert_eq!(data.provenance[0].split, SplitName::Train);
}

#[test]
fn backbone_never_reads_the_ambiguity_flag() {
    for src in [include_str!("../src/backbone.rs"), include_str!("../src/data.rs"), include_str!("../src/baselines.rs")] {
        assert!(!src.contains("ambiguous"), "a backbone-side source mentions the ambiguity flag");
    }
}

#[test]
fn tiny_experiment_end_to_end() {
    let cfg = tiny_config();
    let (recs, hash) = load_dataset(&cfg).unwrap();
    let run = run_experiment(&cfg, &recs, &hash).unwrap();
    assert!(run.failed_folds().is_empty(), "{:?}", run.folds.iter().filter_map(|f| f.outcome.as_ref().err()).collect::<Vec<_>>());
    let table = run.metric_table();
    let covs = run.coverage_keys();
    // Head surgery leaves a coin flip that always commits to connected.
    for v in [Variant::C, Variant::D] {
        let (na, std, _) = aggregate(&table, Method::Variant(v), covs[0], Metric::NaO).unwrap();
        assert_eq!((na, std), (0.5, 0.0));
    }
    for m in run.methods() {
        for &c in &covs {
            let (val_cov, _, _) = aggregate(&table, m, c, Metric::ValCoverage).unwrap();
            assert!(val_cov >= c as f64 / 10_000.0 - 1e-12, "{m:?}");
            if let Some((aa_vh, _, _)) = aggregate(&table, m, c, Metric::AaVh) {
                assert_eq!(aa_vh, 1.0);
            }
        }
    }
    assert!(!run.significance().unwrap().is_empty());

    // Artifacts: leakage audit, report regeneration and re-scoring.
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_experiment(&run, dir.path()).unwrap();
    for f in &manifest.folds {
        audit_leakage(f).unwrap();
        assert!(f.provenance.iter().any(|t| t.stage == "F selector" && t.split == SplitName::Val));
    }
    let csv = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(csv, run.metrics_csv());
    assert_eq!(load_scored_run(dir.path()).unwrap().metrics_csv(), csv);
    assert_eq!(rescore_run(dir.path()).unwrap().metrics_csv(), csv);
    for name in ["summary.md", "summary.csv", "significance.csv", "risk_coverage.svg", "scores.jsonl"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }

    // A tampered provenance tag is caught.
    let mut bad = manifest.folds[0].clone();
    bad.provenance[0].split = SplitName::Test;
    bad.provenance[0].ids_hash = chase_core::persist::content_hash_json(&bad.split.test).unwrap();
    assert!(audit_leakage(&bad).is_err());

    // Parallel schedule matches the serial one.
    let par = run_experiment(&RunConfig { threads: 3, ..cfg.clone() }, &recs, &hash).unwrap();
    assert_eq!(par.metrics_csv(), csv);

    // A single-cell sweep reproduces the full variant.
    let sel = &cfg.selector;
    let cell = SweepCell { g: (sel.gamma * 100.0).round() as u32, w: (sel.w * 100.0).round() as u32, c: (sel.c * 100.0).round() as u32 };
    let sweep = run_sweep(&RunConfig { sweep: vec![cell], ..cfg.clone() }, &recs).unwrap();
    let f_results: Vec<(usize, Vec<MethodResult>)> = run
        .per_fold_results()
        .into_iter()
        .map(|(f, rs)| (f, rs.into_iter().filter(|r| r.method == Method::Variant(Variant::F)).collect()))
        .collect();
    let sweep_results: Vec<(usize, Vec<MethodResult>)> = sweep.cells[0].1.iter().map(|(f, r)| (*f, vec![r.clone()])).collect();
    assert_eq!(metrics_csv(&sweep_results), metrics_csv(&f_results));
    assert!(sweep.markdown().lines().count() == 3);
}

#[test]
fn failed_fold_is_reported_and_others_continue() {
    let mut cfg = tiny_config();
    cfg.variants = vec![Variant::L];
    cfg.baselines = vec![];
    let (mut recs, hash) = load_dataset(&cfg).unwrap();
    // Poison one sequence so the fold that trains on it fails numerically.
    let folds = make_splits(&cfg, &recs).unwrap();
    let victim = folds[0].train[0];
    for r in recs.iter_mut().filter(|r| r.id == victim) {
        r.features[2][0] = f64::NAN;
    }
    let run = run_experiment(&cfg, &recs, &hash).unwrap();
    let failed = run.failed_folds();
    assert!(!failed.is_empty() && failed.len() < cfg.folds, "{failed:?}");
    assert!(run.per_fold_results().len() == cfg.folds - failed.len());
    let _ = Label::Connected;
}
