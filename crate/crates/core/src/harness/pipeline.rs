use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Baseline, Method, RunConfig, Variant};
use super::folds::FoldSplit;
use crate::backbone::{train_backbone, Backbone, BackboneConfig, BackboneOutput, HeadMode};
use crate::baselines::{deep_ensemble, mc_dropout, msp, train_classifier, Classifier, ClassifierConfig, Scored};
use crate::data::{Example, Frame, Normalizer};
use crate::ensemble::{summarize, tune_fusion, EnsembleSummary};
use crate::error::{ChaseError, Result};
use crate::metrics::ScoredRecord;
use crate::persist::content_hash_json;
use crate::selector::{build_features, train_selector, Selector, SelectorConfig, SelectorSample};
use crate::simulator::{Label, SequenceRecord};
use crate::train::TrainLog;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

/// Which split a stage consumed, identified by a hash of its ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceTag {
    pub stage: String,
    pub split: SplitName,
    pub n: usize,
    pub ids_hash: String,
}

/// Normalized examples of one fold. Examples carry features and labels
/// only; ambiguity flags are kept alongside for the selector and metrics.
#[derive(Clone, Debug)]
pub struct FoldData {
    pub split: FoldSplit,
    pub normalizer: Normalizer,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
    pub val_ambiguous: Vec<bool>,
    pub test_ambiguous: Vec<bool>,
    pub provenance: Vec<ProvenanceTag>,
}

impl FoldData {
    pub fn build(records: &[SequenceRecord], split: &FoldSplit) -> Result<Self> {
        let by_id: BTreeMap<u64, &SequenceRecord> = records.iter().map(|r| (r.id, r)).collect();
        let lookup = |ids: &[u64]| -> Result<Vec<&SequenceRecord>> {
            ids.iter()
                .map(|id| by_id.get(id).copied().ok_or_else(|| ChaseError::InvalidInput(format!("fold references unknown id {id}"))))
                .collect()
        };
        let (train, val, test) = (lookup(&split.train)?, lookup(&split.val)?, lookup(&split.test)?);
        if train.is_empty() || val.is_empty() || test.is_empty() {
            return Err(ChaseError::Config(format!("fold {} has an empty split", split.fold)));
        }
        let normalizer = Normalizer::fit(train.iter().map(|r| r.features.as_slice()))?;
        let examples = |rs: &[&SequenceRecord]| -> Vec<Example> {
            rs.iter().map(|r| Example { features: normalizer.apply(&r.features), label: r.label }).collect()
        };
        let mut data = FoldData {
            split: split.clone(),
            train: examples(&train),
            val: examples(&val),
            test: examples(&test),
            val_ambiguous: val.iter().map(|r| r.ambiguous).collect(),
            test_ambiguous: test.iter().map(|r| r.ambiguous).collect(),
            normalizer,
            provenance: Vec::new(),
        };
        data.record("normalizer", SplitName::Train)?;
        Ok(data)
    }

    pub fn ids(&self, split: SplitName) -> &[u64] {
        match split {
            SplitName::Train => &self.split.train,
            SplitName::Val => &self.split.val,
            SplitName::Test => &self.split.test,
        }
    }

    fn record(&mut self, stage: &str, split: SplitName) -> Result<()> {
        let ids = self.ids(split);
        let tag = ProvenanceTag { stage: stage.to_string(), split, n: ids.len(), ids_hash: content_hash_json(&ids)? };
        self.provenance.push(tag);
        Ok(())
    }

    fn seqs(examples: &[Example]) -> Vec<&[Frame]> {
        examples.iter().map(|e| e.features.as_slice()).collect()
    }

    fn labels(examples: &[Example]) -> Vec<Label> {
        examples.iter().map(|e| e.label).collect()
    }
}

/// Number of backbones and classifiers a configuration needs per fold.
pub fn model_counts(cfg: &RunConfig, sweep: bool) -> (usize, usize) {
    let k = cfg.ensemble_seeds.len();
    let has = |v: Variant| cfg.variants.contains(&v);
    let backbones = if sweep || has(Variant::E) || has(Variant::F) {
        k
    } else if cfg.variants.iter().any(|&v| v != Variant::S) {
        1
    } else {
        0
    };
    let classifiers = if !sweep && cfg.baselines.contains(&Baseline::DeepEnsemble) {
        k
    } else if !sweep && (has(Variant::S) || !cfg.baselines.is_empty()) {
        1
    } else {
        0
    };
    (backbones, classifiers)
}

/// Trained models of one fold, indexed like `ensemble_seeds`.
#[derive(Clone, Debug, Default)]
pub struct FoldModels {
    pub backbones: Vec<Backbone>,
    pub classifiers: Vec<Classifier>,
    pub backbone_logs: Vec<TrainLog>,
    pub classifier_logs: Vec<TrainLog>,
}

enum Job {
    Backbone(usize, usize),
    Classifier(usize, usize),
}

enum Trained {
    Backbone(Box<Backbone>, TrainLog),
    Classifier(Box<Classifier>, TrainLog),
}

/// Trains every fold's backbones and classifiers as independent jobs.
/// Results are placed by job index, so any schedule gives the same models.
pub fn train_models(data: &[&FoldData], cfg: &RunConfig, sweep: bool) -> Vec<Result<FoldModels>> {
    let (nb, nc) = model_counts(cfg, sweep);
    let mut jobs = Vec::new();
    for f in 0..data.len() {
        jobs.extend((0..nb).map(|i| Job::Backbone(f, i)));
        jobs.extend((0..nc).map(|i| Job::Classifier(f, i)));
    }
    let trained: Vec<(usize, Result<Trained>)> = jobs
        .par_iter()
        .map(|job| match *job {
            Job::Backbone(f, i) => {
                let bc = BackboneConfig { seed: cfg.ensemble_seeds[i], ..cfg.backbone.clone() };
                let d = data[f];
                (f, train_backbone(&d.train, &d.val, &bc).map(|(m, l)| Trained::Backbone(Box::new(m), l)))
            }
            Job::Classifier(f, i) => {
                let cc = ClassifierConfig { seed: cfg.ensemble_seeds[i], ..cfg.classifier.clone() };
                let d = data[f];
                (f, train_classifier(&d.train, &d.val, &cc).map(|(m, l)| Trained::Classifier(Box::new(m), l)))
            }
        })
        .collect();
    let mut out: Vec<Result<FoldModels>> = (0..data.len()).map(|_| Ok(FoldModels::default())).collect();
    for (f, t) in trained {
        let slot = &mut out[f];
        match (t, slot.as_mut()) {
            (Ok(Trained::Backbone(m, l)), Ok(fm)) => {
                fm.backbones.push(*m);
                fm.backbone_logs.push(l);
            }
            (Ok(Trained::Classifier(m, l)), Ok(fm)) => {
                fm.classifiers.push(*m);
                fm.classifier_logs.push(l);
            }
            (Err(e), Ok(_)) => *slot = Err(e),
            (_, Err(_)) => {}
        }
    }
    out
}

/// How a dual-hypothesis method is assembled from trained backbones.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaseSpec {
    pub members: usize,
    pub mode: HeadMode,
    pub tune_alpha: bool,
    /// `None` scores by the maximum fused probability.
    pub selector: Option<SelectorConfig>,
}

pub fn chase_spec(v: Variant, cfg: &RunConfig) -> Option<ChaseSpec> {
    let base = &cfg.selector;
    let sel = |gamma: f64, w: f64, c: f64, use_aux: bool| Some(SelectorConfig { gamma, w, c, use_aux, ..base.clone() });
    let single = |mode, tune_alpha, selector| Some(ChaseSpec { members: 1, mode, tune_alpha, selector });
    let k = cfg.ensemble_seeds.len();
    match v {
        Variant::S => None,
        Variant::M => single(HeadMode::Dual, true, None),
        Variant::C => single(HeadMode::ConnectedOnly, false, sel(base.gamma, 0.0, 0.0, true)),
        Variant::D => single(HeadMode::NotConnectedOnly, false, sel(base.gamma, 0.0, 0.0, true)),
        Variant::L => single(HeadMode::Dual, false, sel(0.0, 0.0, 0.0, false)),
        Variant::B => single(HeadMode::Dual, false, sel(base.gamma, 0.0, 0.0, false)),
        Variant::A => single(HeadMode::Dual, true, sel(base.gamma, 0.0, 0.0, true)),
        Variant::E => Some(ChaseSpec { members: k, mode: HeadMode::Dual, tune_alpha: true, selector: sel(base.gamma, 0.0, 0.0, true) }),
        Variant::F => Some(ChaseSpec { members: k, mode: HeadMode::Dual, tune_alpha: true, selector: Some(base.clone()) }),
    }
}

/// Per-member backbone outputs on the validation and test splits.
#[derive(Clone, Debug, Default)]
pub struct OutputCache {
    entries: BTreeMap<(usize, HeadMode), (Vec<BackboneOutput>, Vec<BackboneOutput>)>,
}

impl OutputCache {
    fn get(&mut self, models: &FoldModels, data: &FoldData, member: usize, mode: HeadMode) -> Result<&(Vec<BackboneOutput>, Vec<BackboneOutput>)> {
        if !self.entries.contains_key(&(member, mode)) {
            let bb = models
                .backbones
                .get(member)
                .ok_or_else(|| ChaseError::Config(format!("backbone {member} was not trained")))?;
            let val = bb.predict(&FoldData::seqs(&data.val), mode)?;
            let test = bb.predict(&FoldData::seqs(&data.test), mode)?;
            self.entries.insert((member, mode), (val, test));
        }
        Ok(&self.entries[&(member, mode)])
    }

    fn by_sequence(&mut self, models: &FoldModels, data: &FoldData, spec: &ChaseSpec) -> Result<[Vec<Vec<BackboneOutput>>; 2]> {
        let mut val = vec![Vec::with_capacity(spec.members); data.val.len()];
        let mut test = vec![Vec::with_capacity(spec.members); data.test.len()];
        for m in 0..spec.members {
            let (v, t) = self.get(models, data, m, spec.mode)?;
            val.iter_mut().zip(v).for_each(|(dst, o)| dst.push(*o));
            test.iter_mut().zip(t).for_each(|(dst, o)| dst.push(*o));
        }
        Ok([val, test])
    }
}

/// Validation and test scores of one method on one fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: Method,
    /// Fusion weight, for methods that fuse.
    pub alpha: Option<f64>,
    pub val: Vec<ScoredRecord>,
    pub test: Vec<ScoredRecord>,
}

fn to_records(scored: &[Scored], examples: &[Example], ambiguous: &[bool]) -> Vec<ScoredRecord> {
    scored
        .iter()
        .zip(examples)
        .zip(ambiguous)
        .map(|((s, e), &a)| ScoredRecord { prediction: s.prediction, label: e.label, ambiguous: a, score: s.score })
        .collect()
}

fn summary_records(summaries: &[EnsembleSummary], scores: &[f64], examples: &[Example], ambiguous: &[bool]) -> Vec<ScoredRecord> {
    summaries
        .iter()
        .zip(scores)
        .zip(examples.iter().zip(ambiguous))
        .map(|((s, &score), (e, &a))| ScoredRecord { prediction: s.prediction, label: e.label, ambiguous: a, score })
        .collect()
}

/// Fitted state of a dual-hypothesis method, for re-scoring.
#[derive(Clone, Copy, Debug)]
pub struct Reuse<'a> {
    pub alpha: f64,
    pub selector: Option<&'a Selector>,
}

/// Fuses, summarizes and (optionally) trains the selector on the
/// validation split, then scores both splits. With `reuse` the fusion
/// weight and selector are taken as given.
pub fn chase_scores(
    method: Method,
    spec: &ChaseSpec,
    models: &FoldModels,
    cache: &mut OutputCache,
    data: &mut FoldData,
    reuse: Option<Reuse<'_>>,
) -> Result<(MethodScores, Option<(Selector, Option<TrainLog>)>)> {
    let [val_out, test_out] = cache.by_sequence(models, data, spec)?;
    let alpha = match reuse {
        Some(r) => r.alpha,
        None if spec.tune_alpha => {
            data.record(&format!("{} fusion weight", method.name()), SplitName::Val)?;
            tune_fusion(&val_out, &FoldData::labels(&data.val))?
        }
        None => 1.0,
    };
    let val_sum: Vec<EnsembleSummary> = val_out.iter().map(|m| summarize(m, alpha)).collect::<Result<_>>()?;
    let test_sum: Vec<EnsembleSummary> = test_out.iter().map(|m| summarize(m, alpha)).collect::<Result<_>>()?;
    let (val_scores, test_scores, selector) = match &spec.selector {
        None => {
            let msp = |s: &[EnsembleSummary]| s.iter().map(|x| x.pi_fused[x.prediction.index()]).collect::<Vec<f64>>();
            (msp(&val_sum), msp(&test_sum), None)
        }
        Some(sc) => {
            let samples: Vec<SelectorSample> = val_sum
                .iter()
                .zip(&data.val)
                .zip(&data.val_ambiguous)
                .map(|((s, e), &a)| SelectorSample::new(build_features(s, sc.use_aux), s.prediction != e.label, a, sc.gamma))
                .collect();
            let (sel, log) = match reuse.and_then(|r| r.selector) {
                Some(sel) => (sel.clone(), None),
                None => {
                    data.record(&format!("{} selector", method.name()), SplitName::Val)?;
                    let (sel, log) = train_selector(&samples, sc)?;
                    (sel, Some(log))
                }
            };
            let phi = |s: &[EnsembleSummary]| s.iter().map(|x| build_features(x, sc.use_aux)).collect::<Vec<_>>();
            (sel.accept_scores(&phi(&val_sum))?, sel.accept_scores(&phi(&test_sum))?, Some((sel, log)))
        }
    };
    let scores = MethodScores {
        method,
        alpha: Some(alpha),
        val: summary_records(&val_sum, &val_scores, &data.val, &data.val_ambiguous),
        test: summary_records(&test_sum, &test_scores, &data.test, &data.test_ambiguous),
    };
    Ok((scores, selector))
}

fn baseline_scores(method: Method, models: &FoldModels, data: &FoldData, cfg: &RunConfig) -> Result<MethodScores> {
    let first = || models.classifiers.first().ok_or_else(|| ChaseError::Config("no classifier was trained".into()));
    let score = |examples: &[Example]| -> Result<Vec<Scored>> {
        let seqs = FoldData::seqs(examples);
        match method {
            Method::Variant(Variant::S) | Method::Baseline(Baseline::Msp) => msp(first()?, &seqs),
            Method::Baseline(Baseline::McDropout) => mc_dropout(first()?, &seqs, cfg.mc_passes, cfg.ensemble_seeds[0]),
            Method::Baseline(Baseline::DeepEnsemble) => deep_ensemble(&models.classifiers, &seqs),
            Method::Variant(v) => Err(ChaseError::Config(format!("variant {v} is not a classifier baseline"))),
        }
    };
    Ok(MethodScores {
        method,
        alpha: None,
        val: to_records(&score(&data.val)?, &data.val, &data.val_ambiguous),
        test: to_records(&score(&data.test)?, &data.test, &data.test_ambiguous),
    })
}

/// Everything one fold produced.
#[derive(Clone, Debug, Default)]
pub struct FoldScores {
    pub scores: Vec<MethodScores>,
    /// Selectors by method name, with the training log when fit in this run.
    pub selectors: Vec<(String, Selector, Option<TrainLog>)>,
}

/// Scores every configured method on one fold. `fitted` supplies saved
/// fusion weights and selectors by method name; without it they are fit on
/// the validation split.
pub fn score_fold(
    models: &FoldModels,
    data: &mut FoldData,
    cfg: &RunConfig,
    fitted: Option<&BTreeMap<String, (f64, Option<Selector>)>>,
) -> Result<FoldScores> {
    let (nb, nc) = (models.backbones.len(), models.classifiers.len());
    if nb > 0 {
        data.record("backbone fit", SplitName::Train)?;
        data.record("backbone early stopping", SplitName::Val)?;
    }
    if nc > 0 {
        data.record("classifier fit", SplitName::Train)?;
        data.record("classifier early stopping", SplitName::Val)?;
    }
    let mut cache = OutputCache::default();
    let mut out = FoldScores::default();
    for method in cfg.methods() {
        let spec = match method {
            Method::Variant(v) => chase_spec(v, cfg),
            Method::Baseline(_) => None,
        };
        match spec {
            Some(spec) => {
                let reuse = match fitted {
                    Some(f) => {
                        let (alpha, sel) = f
                            .get(method.name())
                            .ok_or_else(|| ChaseError::InvalidInput(format!("no saved state for method {}", method.name())))?;
                        Some(Reuse { alpha: *alpha, selector: sel.as_ref() })
                    }
                    None => None,
                };
                let (s, sel) = chase_scores(method, &spec, models, &mut cache, data, reuse)?;
                if let Some((sel, log)) = sel {
                    out.selectors.push((method.name().to_string(), sel, log));
                }
                out.scores.push(s);
            }
            None => out.scores.push(baseline_scores(method, models, data, cfg)?),
        }
    }
    data.record("thresholds", SplitName::Val)?;
    data.record("evaluation", SplitName::Test)?;
    Ok(out)
}
