//! Experiment orchestration: stratified folds, training, scoring,
//! evaluation, sweeps and run artifacts.
//!
//! Training jobs (fold x seed x model) and per-fold scoring run on a rayon
//! pool. Every job draws from its own seeded streams and results are
//! gathered in job order, so the outputs do not depend on the schedule.

mod config;
mod folds;
mod pipeline;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{default_sweep_grid, Baseline, Method, RunConfig, SplitMode, SweepCell, Variant};
pub use folds::{fixed_split, make_folds, FoldSplit, VALIDATION_SHARE};
pub use pipeline::{
    chase_scores, chase_spec, model_counts, score_fold, train_models, ChaseSpec, FoldData, FoldModels, FoldScores, MethodScores,
    OutputCache, ProvenanceTag, Reuse, SplitName,
};
pub use report::{
    aggregate, baseline_methods, coverage_key, evaluate_scores, mean_risk_curve, metric_table, metrics_csv, risk_coverage_svg,
    significance, significance_csv, summary_csv, summary_markdown, sweep_markdown, CoverageKey, CoverageResult, Metric,
    MethodResult, MetricTable, Significance,
};

use crate::backbone::Backbone;
use crate::baselines::Classifier;
use crate::data::Normalizer;
use crate::error::{ChaseError, Result};
use crate::metrics::ScoredRecord;
use crate::persist::{self, content_hash_json};
use crate::selector::Selector;
use crate::simulator::{content_hash, generate_dataset, jsonl_bytes, Label, SequenceRecord};
use crate::train::TrainLog;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SCORES_FILE: &str = "scores.jsonl";

/// Loads `dataset.jsonl` from the configured directory, or generates the
/// dataset from the simulator settings. Returns the records and the
/// SHA-256 of their JSON-lines encoding.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Vec<SequenceRecord>, String)> {
    match &cfg.dataset {
        Some(dir) => {
            let path = dir.join("dataset.jsonl");
            let bytes = fs::read(&path)?;
            let records = crate::simulator::read_jsonl(&path)?;
            Ok((records, content_hash(&bytes)))
        }
        None => {
            let ds = generate_dataset(&cfg.simulator)?;
            let hash = content_hash(&jsonl_bytes(&ds.records)?);
            Ok((ds.records, hash))
        }
    }
}

pub fn make_splits(cfg: &RunConfig, records: &[SequenceRecord]) -> Result<Vec<FoldSplit>> {
    match cfg.split {
        SplitMode::Folds => make_folds(records, cfg.folds, cfg.seed),
        SplitMode::Fixed => Ok(vec![fixed_split(records)?]),
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ChaseError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Builds fold data and trains models; a fold whose data or training
/// fails carries the error message.
fn prepare(
    cfg: &RunConfig,
    records: &[SequenceRecord],
    splits: &[FoldSplit],
    sweep: bool,
) -> Vec<std::result::Result<(FoldData, FoldModels), String>> {
    let built: Vec<Result<FoldData>> = splits.iter().map(|s| FoldData::build(records, s)).collect();
    let ok: Vec<&FoldData> = built.iter().filter_map(|r| r.as_ref().ok()).collect();
    let mut trained = train_models(&ok, cfg, sweep).into_iter();
    built
        .into_iter()
        .map(|b| match b {
            Ok(data) => match trained.next() {
                Some(Ok(models)) => Ok((data, models)),
                Some(Err(e)) => Err(e.to_string()),
                None => Err("internal: missing training result".into()),
            },
            Err(e) => Err(e.to_string()),
        })
        .collect()
}

/// Everything one successful fold produced.
#[derive(Clone, Debug)]
pub struct FoldArtifacts {
    pub data: FoldData,
    pub models: FoldModels,
    pub scores: FoldScores,
    pub results: Vec<MethodResult>,
}

#[derive(Clone, Debug)]
pub struct FoldRun {
    pub fold: usize,
    pub split: FoldSplit,
    pub outcome: std::result::Result<FoldArtifacts, String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub config: RunConfig,
    pub dataset_hash: String,
    pub folds: Vec<FoldRun>,
}

impl ExperimentRun {
    pub fn failed_folds(&self) -> Vec<usize> {
        self.folds.iter().filter(|f| f.outcome.is_err()).map(|f| f.fold).collect()
    }

    pub fn per_fold_results(&self) -> Vec<(usize, Vec<MethodResult>)> {
        self.folds.iter().filter_map(|f| f.outcome.as_ref().ok().map(|a| (f.fold, a.results.clone()))).collect()
    }

    pub fn metric_table(&self) -> MetricTable {
        metric_table(&self.per_fold_results())
    }

    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.per_fold_results())
    }

    pub fn methods(&self) -> Vec<Method> {
        self.config.methods()
    }

    pub fn coverage_keys(&self) -> Vec<CoverageKey> {
        self.config.coverages.iter().map(|&c| coverage_key(c)).collect()
    }

    pub fn significance(&self) -> Result<Vec<Significance>> {
        let methods = self.methods();
        let chase = Method::Variant(Variant::F);
        if !methods.contains(&chase) {
            return Ok(Vec::new());
        }
        significance(&self.metric_table(), chase, &baseline_methods(&methods), &self.coverage_keys())
    }

    /// Recomputes thresholds and metrics for new coverage targets from the
    /// stored validation and test scores.
    pub fn recalibrate(&mut self, coverages: &[f64]) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.coverages = coverages.to_vec();
        cfg.validate()?;
        for f in &mut self.folds {
            if let Ok(a) = &mut f.outcome {
                a.results = evaluate_fold(&a.scores, coverages)?;
            }
        }
        self.config = cfg;
        Ok(())
    }

    /// Per-method test records of every successful fold.
    pub fn test_records(&self, method: Method) -> Vec<Vec<ScoredRecord>> {
        self.folds
            .iter()
            .filter_map(|f| f.outcome.as_ref().ok())
            .filter_map(|a| a.scores.scores.iter().find(|s| s.method == method).map(|s| s.test.clone()))
            .collect()
    }
}

fn evaluate_fold(scores: &FoldScores, coverages: &[f64]) -> Result<Vec<MethodResult>> {
    scores.scores.iter().map(|s| evaluate_scores(s, coverages)).collect()
}

/// Runs every configured method on every fold.
pub fn run_experiment(cfg: &RunConfig, records: &[SequenceRecord], dataset_hash: &str) -> Result<ExperimentRun> {
    cfg.validate()?;
    let splits = make_splits(cfg, records)?;
    let folds = with_pool(cfg.threads, || {
        let prepared = prepare(cfg, records, &splits, false);
        prepared
            .into_par_iter()
            .zip(splits.par_iter())
            .map(|(p, split)| {
                let outcome = p.and_then(|(mut data, models)| {
                    let scores = score_fold(&models, &mut data, cfg, None).map_err(|e| e.to_string())?;
                    let results = evaluate_fold(&scores, &cfg.coverages).map_err(|e| e.to_string())?;
                    Ok(FoldArtifacts { data, models, scores, results })
                });
                if let Err(e) = &outcome {
                    tracing::error!(fold = split.fold, error = %e, "fold failed");
                }
                FoldRun { fold: split.fold, split: split.clone(), outcome }
            })
            .collect::<Vec<_>>()
    })?;
    Ok(ExperimentRun { config: cfg.clone(), dataset_hash: dataset_hash.to_string(), folds })
}

/// Sweep results: per cell, per fold, the full-variant metrics.
#[derive(Clone, Debug)]
pub struct SweepRun {
    pub config: RunConfig,
    pub cells: Vec<(SweepCell, Vec<(usize, MethodResult)>)>,
    pub failed_folds: Vec<usize>,
}

impl SweepRun {
    pub fn tables(&self) -> Vec<((u32, u32, u32), MetricTable)> {
        self.cells
            .iter()
            .map(|(cell, per_fold)| {
                let grouped: Vec<(usize, Vec<MethodResult>)> = per_fold.iter().map(|(f, r)| (*f, vec![r.clone()])).collect();
                ((cell.g, cell.w, cell.c), metric_table(&grouped))
            })
            .collect()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("g,w,c,method,fold,coverage,metric,value\n");
        for (cell, per_fold) in &self.cells {
            let grouped: Vec<(usize, Vec<MethodResult>)> = per_fold.iter().map(|(f, r)| (*f, vec![r.clone()])).collect();
            for line in metrics_csv(&grouped).lines().skip(1) {
                out.push_str(&format!("{},{},{},{line}\n", cell.g, cell.w, cell.c));
            }
        }
        out
    }

    pub fn markdown(&self) -> String {
        let covs: Vec<CoverageKey> = self.config.coverages.iter().map(|&c| coverage_key(c)).collect();
        sweep_markdown(&self.tables(), Method::Variant(Variant::F), &covs)
    }
}

/// Trains the backbones once per fold, then the full-variant selector for
/// every `(γ, w, c)` cell.
pub fn run_sweep(cfg: &RunConfig, records: &[SequenceRecord]) -> Result<SweepRun> {
    cfg.validate()?;
    if cfg.sweep.is_empty() {
        return Err(ChaseError::Config("sweep grid is empty".into()));
    }
    let splits = make_splits(cfg, records)?;
    let per_fold = with_pool(cfg.threads, || {
        prepare(cfg, records, &splits, true)
            .into_par_iter()
            .zip(splits.par_iter())
            .map(|(p, split)| {
                let out = p.and_then(|(mut data, models)| {
                    let mut cache = OutputCache::default();
                    cfg.sweep
                        .iter()
                        .map(|cell| {
                            let (gamma, w, c) = cell.weights();
                            let cell_cfg = RunConfig { selector: crate::selector::SelectorConfig { gamma, w, c, ..cfg.selector.clone() }, ..cfg.clone() };
                            let spec = chase_spec(Variant::F, &cell_cfg).expect("full variant has a spec");
                            let (scores, _) = chase_scores(Method::Variant(Variant::F), &spec, &models, &mut cache, &mut data, None)?;
                            evaluate_scores(&scores, &cfg.coverages)
                        })
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| e.to_string())
                });
                (split.fold, out)
            })
            .collect::<Vec<_>>()
    })?;
    let mut cells: Vec<(SweepCell, Vec<(usize, MethodResult)>)> = cfg.sweep.iter().map(|&c| (c, Vec::new())).collect();
    let mut failed_folds = Vec::new();
    for (fold, out) in per_fold {
        match out {
            Ok(results) => {
                for (slot, r) in cells.iter_mut().zip(results) {
                    slot.1.push((fold, r));
                }
            }
            Err(e) => {
                tracing::error!(fold, error = %e, "sweep fold failed");
                failed_folds.push(fold);
            }
        }
    }
    Ok(SweepRun { config: cfg.clone(), cells, failed_folds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub kind: String,
    pub name: String,
    pub seed: Option<u64>,
    pub checkpoint: Option<String>,
    pub best_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub coverage: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub method: String,
    pub alpha: Option<f64>,
    pub thresholds: Vec<Threshold>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub fold: usize,
    pub error: Option<String>,
    pub split: FoldSplit,
    pub normalizer: Option<Normalizer>,
    pub provenance: Vec<ProvenanceTag>,
    pub models: Vec<ModelEntry>,
    pub methods: Vec<MethodEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub config_hash: String,
    pub dataset_hash: String,
    pub failed_folds: Vec<usize>,
    pub folds: Vec<FoldManifest>,
}

/// Checks that the splits are disjoint and that no stage other than
/// evaluation consumed the test split.
pub fn audit_leakage(fold: &FoldManifest) -> Result<()> {
    let s = &fold.split;
    let mut all: Vec<u64> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    let n = all.len();
    all.sort_unstable();
    all.dedup();
    if all.len() != n {
        return Err(ChaseError::InvalidInput(format!("fold {}: train, val and test overlap", fold.fold)));
    }
    let test_hash = content_hash_json(&s.test)?;
    for tag in &fold.provenance {
        let expected = match tag.split {
            SplitName::Train => &s.train,
            SplitName::Val => &s.val,
            SplitName::Test => &s.test,
        };
        if tag.ids_hash != content_hash_json(expected)? {
            return Err(ChaseError::InvalidInput(format!("fold {}: stage {:?} ids do not match its split", fold.fold, tag.stage)));
        }
        if tag.stage != "evaluation" && (tag.split == SplitName::Test || tag.ids_hash == test_hash) {
            return Err(ChaseError::InvalidInput(format!("fold {}: stage {:?} consumed test data", fold.fold, tag.stage)));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    fold: usize,
    method: String,
    split: SplitName,
    id: u64,
    prediction: Label,
    label: Label,
    ambiguous: bool,
    score: f64,
}

fn log_entry(kind: &str, name: String, seed: Option<u64>, checkpoint: Option<String>, log: Option<&TrainLog>) -> ModelEntry {
    ModelEntry {
        kind: kind.into(),
        name,
        seed,
        checkpoint,
        best_epoch: log.map(|l| l.best_epoch),
        epochs_run: log.map(|l| l.epochs.len()),
    }
}

fn rel(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).display().to_string()
}

/// Writes checkpoints, scores, metric tables, plots and the manifest.
pub fn write_experiment(run: &ExperimentRun, dir: &Path) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let cfg = &run.config;
    let mut folds = Vec::new();
    let mut score_lines = Vec::new();
    for f in &run.folds {
        let mut fm = FoldManifest {
            fold: f.fold,
            error: None,
            split: f.split.clone(),
            normalizer: None,
            provenance: Vec::new(),
            models: Vec::new(),
            methods: Vec::new(),
        };
        match &f.outcome {
            Err(e) => fm.error = Some(e.clone()),
            Ok(a) => {
                fm.normalizer = Some(a.data.normalizer.clone());
                fm.provenance = a.data.provenance.clone();
                let ck_dir = dir.join("checkpoints").join(format!("fold{}", f.fold));
                if cfg.checkpoints {
                    fs::create_dir_all(&ck_dir)?;
                }
                let mut save = |kind: &str, name: String, seed: Option<u64>, log: Option<&TrainLog>, w: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
                    let ck = if cfg.checkpoints {
                        let path = ck_dir.join(format!("{name}.json"));
                        w(&path)?;
                        Some(rel(dir, &path))
                    } else {
                        None
                    };
                    fm.models.push(log_entry(kind, name, seed, ck, log));
                    Ok(())
                };
                for (i, (m, l)) in a.models.backbones.iter().zip(&a.models.backbone_logs).enumerate() {
                    let seed = cfg.ensemble_seeds[i];
                    save("backbone", format!("backbone_seed{seed}"), Some(seed), Some(l), &|p| m.save(p))?;
                }
                for (i, (m, l)) in a.models.classifiers.iter().zip(&a.models.classifier_logs).enumerate() {
                    let seed = cfg.ensemble_seeds[i];
                    save("classifier", format!("classifier_seed{seed}"), Some(seed), Some(l), &|p| m.save(p))?;
                }
                for (name, sel, log) in &a.scores.selectors {
                    save("selector", format!("selector_{name}"), None, log.as_ref(), &|p| persist::save(p, "selector", sel))?;
                }
                for r in &a.results {
                    fm.methods.push(MethodEntry {
                        method: r.method.name().to_string(),
                        alpha: r.alpha,
                        thresholds: r.coverages.iter().map(|c| Threshold { coverage: c.coverage, tau: c.tau }).collect(),
                    });
                }
                for s in &a.scores.scores {
                    for (split, recs, ids) in [(SplitName::Val, &s.val, &f.split.val), (SplitName::Test, &s.test, &f.split.test)] {
                        for (r, &id) in recs.iter().zip(ids) {
                            score_lines.push(ScoreLine {
                                fold: f.fold,
                                method: s.method.name().to_string(),
                                split,
                                id,
                                prediction: r.prediction,
                                label: r.label,
                                ambiguous: r.ambiguous,
                                score: r.score,
                            });
                        }
                    }
                }
            }
        }
        folds.push(fm);
    }
    let mut scores = Vec::new();
    for line in &score_lines {
        serde_json::to_writer(&mut scores, line)?;
        scores.push(b'\n');
    }
    fs::write(dir.join(SCORES_FILE), scores)?;
    let manifest = RunManifest {
        config: cfg.clone(),
        config_hash: cfg.hash()?,
        dataset_hash: run.dataset_hash.clone(),
        failed_folds: run.failed_folds(),
        folds,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    write_reports(run, dir)?;
    Ok(manifest)
}

/// Metric CSVs, markdown summary and risk-coverage plot.
pub fn write_reports(run: &ExperimentRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let table = run.metric_table();
    let methods = run.methods();
    let covs = run.coverage_keys();
    let sig = run.significance()?;
    fs::write(dir.join(METRICS_FILE), run.metrics_csv())?;
    fs::write(dir.join("summary.csv"), summary_csv(&table, &methods, &covs))?;
    fs::write(dir.join("significance.csv"), significance_csv(&sig))?;
    fs::write(dir.join("summary.md"), summary_markdown(&table, &methods, &covs, &sig, &run.failed_folds()))?;
    let curves: Vec<(String, Vec<(f64, f64)>)> =
        methods.iter().map(|&m| (m.name().to_string(), mean_risk_curve(&run.test_records(m), 20))).collect();
    fs::write(dir.join("risk_coverage.svg"), risk_coverage_svg(&curves))?;
    Ok(())
}

pub fn write_sweep(run: &SweepRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("sweep.csv"), run.csv())?;
    fs::write(dir.join("sweep.md"), run.markdown())?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?)
}

/// Rebuilds an [`ExperimentRun`] from `scores.jsonl` and the manifest
/// without touching any model.
pub fn load_scored_run(dir: &Path) -> Result<ExperimentRun> {
    let manifest = read_manifest(dir)?;
    let text = fs::read_to_string(dir.join(SCORES_FILE))?;
    let mut grouped: BTreeMap<(usize, String), (Vec<ScoredRecord>, Vec<ScoredRecord>)> = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let l: ScoreLine = serde_json::from_str(line)?;
        let rec = ScoredRecord { prediction: l.prediction, label: l.label, ambiguous: l.ambiguous, score: l.score };
        let slot = grouped.entry((l.fold, l.method)).or_default();
        match l.split {
            SplitName::Val => slot.0.push(rec),
            SplitName::Test => slot.1.push(rec),
            SplitName::Train => return Err(ChaseError::InvalidInput("scores file holds training records".into())),
        }
    }
    let cfg = manifest.config.clone();
    let mut folds = Vec::new();
    for fm in &manifest.folds {
        let outcome = match &fm.error {
            Some(e) => Err(e.clone()),
            None => {
                let mut scores = FoldScores::default();
                for entry in &fm.methods {
                    let (val, test) = grouped.remove(&(fm.fold, entry.method.clone())).unwrap_or_default();
                    scores.scores.push(MethodScores { method: Method::from_name(&entry.method)?, alpha: entry.alpha, val, test });
                }
                let results = evaluate_fold(&scores, &cfg.coverages)?;
                Ok(FoldArtifacts {
                    data: empty_fold_data(fm)?,
                    models: FoldModels::default(),
                    scores,
                    results,
                })
            }
        };
        folds.push(FoldRun { fold: fm.fold, split: fm.split.clone(), outcome });
    }
    Ok(ExperimentRun { config: cfg, dataset_hash: manifest.dataset_hash, folds })
}

fn empty_fold_data(fm: &FoldManifest) -> Result<FoldData> {
    Ok(FoldData {
        split: fm.split.clone(),
        normalizer: fm.normalizer.clone().ok_or_else(|| ChaseError::InvalidInput(format!("fold {} has no normalizer", fm.fold)))?,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        val_ambiguous: Vec::new(),
        test_ambiguous: Vec::new(),
        provenance: fm.provenance.clone(),
    })
}

/// Re-scores a finished run from its checkpoints, saved fusion weights and
/// selectors; nothing is retrained.
pub fn rescore_run(dir: &Path) -> Result<ExperimentRun> {
    let manifest = read_manifest(dir)?;
    let cfg = manifest.config.clone();
    let (records, hash) = load_dataset(&cfg)?;
    if hash != manifest.dataset_hash {
        return Err(ChaseError::InvalidInput("dataset hash differs from the run manifest".into()));
    }
    let ck_path = |e: &ModelEntry| -> Result<PathBuf> {
        e.checkpoint
            .as_ref()
            .map(|c| dir.join(c))
            .ok_or_else(|| ChaseError::InvalidInput(format!("run was written without checkpoints ({})", e.name)))
    };
    let mut folds = Vec::new();
    for fm in &manifest.folds {
        if let Some(e) = &fm.error {
            folds.push(FoldRun { fold: fm.fold, split: fm.split.clone(), outcome: Err(e.clone()) });
            continue;
        }
        let mut data = FoldData::build(&records, &fm.split)?;
        if Some(&data.normalizer) != fm.normalizer.as_ref() {
            return Err(ChaseError::InvalidInput(format!("fold {}: normalizer differs from the manifest", fm.fold)));
        }
        let mut models = FoldModels::default();
        let mut selectors: BTreeMap<String, Selector> = BTreeMap::new();
        for e in &fm.models {
            let path = ck_path(e)?;
            match e.kind.as_str() {
                "backbone" => models.backbones.push(Backbone::load(&path)?),
                "classifier" => models.classifiers.push(Classifier::load(&path)?),
                "selector" => {
                    let mut s: Selector = persist::load(&path, "selector")?;
                    s.params.restore_grads();
                    selectors.insert(e.name.trim_start_matches("selector_").to_string(), s);
                }
                other => return Err(ChaseError::InvalidInput(format!("unknown model kind {other}"))),
            }
        }
        let fitted: BTreeMap<String, (f64, Option<Selector>)> = fm
            .methods
            .iter()
            .filter_map(|m| m.alpha.map(|a| (m.method.clone(), (a, selectors.remove(&m.method)))))
            .collect();
        let scores = score_fold(&models, &mut data, &cfg, Some(&fitted))?;
        let results = evaluate_fold(&scores, &cfg.coverages)?;
        data.provenance = fm.provenance.clone();
        folds.push(FoldRun { fold: fm.fold, split: fm.split.clone(), outcome: Ok(FoldArtifacts { data, models, scores, results }) });
    }
    Ok(ExperimentRun { config: cfg, dataset_hash: hash, folds })
}
