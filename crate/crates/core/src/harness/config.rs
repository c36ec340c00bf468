use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneConfig;
use crate::baselines::ClassifierConfig;
use crate::ensemble::SEEDS;
use crate::error::{ChaseError, Result};
use crate::persist::content_hash_json;
use crate::selector::SelectorConfig;
use crate::simulator::SimConfig;

/// Ablation lattice codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    S,
    M,
    C,
    D,
    L,
    B,
    A,
    E,
    F,
}

impl Variant {
    pub const ALL: [Variant; 9] =
        [Variant::S, Variant::M, Variant::C, Variant::D, Variant::L, Variant::B, Variant::A, Variant::E, Variant::F];

    pub fn code(self) -> &'static str {
        match self {
            Variant::S => "S",
            Variant::M => "M",
            Variant::C => "C",
            Variant::D => "D",
            Variant::L => "L",
            Variant::B => "B",
            Variant::A => "A",
            Variant::E => "E",
            Variant::F => "F",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::S => "single-branch GRU + MSP",
            Variant::M => "dual hypothesis + MSP",
            Variant::C => "connected hypothesis only",
            Variant::D => "not-connected hypothesis only",
            Variant::L => "dual hypothesis + error-only selector",
            Variant::B => "+ budgeted ambiguity cost",
            Variant::A => "+ fused auxiliary score",
            Variant::E => "+ 3-seed ensemble",
            Variant::F => "full CHASE",
        }
    }
}

impl FromStr for Variant {
    type Err = ChaseError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ChaseError::Config(format!("unknown variant {s:?}; expected one of S M C D L B A E F")))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Msp,
    McDropout,
    DeepEnsemble,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Msp, Baseline::McDropout, Baseline::DeepEnsemble];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Msp => "MSP",
            Baseline::McDropout => "MC-Dropout",
            Baseline::DeepEnsemble => "Deep-Ensemble",
        }
    }
}

/// Anything that produces a row in the results.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Variant(Variant),
    Baseline(Baseline),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Variant(v) => v.code(),
            Method::Baseline(b) => b.name(),
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        if let Some(b) = Baseline::ALL.into_iter().find(|b| b.name() == s) {
            return Ok(Method::Baseline(b));
        }
        s.parse().map(Method::Variant)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Stratified k-fold over matched pairs.
    Folds,
    /// The simulator's train/val/test tags, as a single fold.
    Fixed,
}

/// One `(γ, w, c)` sweep cell in percent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepCell {
    pub g: u32,
    pub w: u32,
    pub c: u32,
}

impl SweepCell {
    pub fn weights(self) -> (f64, f64, f64) {
        (self.g as f64 / 100.0, self.w as f64 / 100.0, self.c as f64 / 100.0)
    }
}

/// The nine published sweep rows.
pub fn default_sweep_grid() -> Vec<SweepCell> {
    [(60, 70, 10), (62, 66, 10), (62, 68, 10), (62, 68, 8), (60, 68, 10), (60, 72, 8), (58, 72, 10), (65, 65, 8), (64, 66, 10)]
        .into_iter()
        .map(|(g, w, c)| SweepCell { g, w, c })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Fold assignment seed.
    pub seed: u64,
    pub folds: usize,
    pub split: SplitMode,
    pub coverages: Vec<f64>,
    pub variants: Vec<Variant>,
    pub baselines: Vec<Baseline>,
    /// Backbone and classifier seeds; the first one serves single-model methods.
    pub ensemble_seeds: Vec<u64>,
    pub mc_passes: usize,
    /// Worker threads; 0 picks the number of cores.
    pub threads: usize,
    /// Existing dataset directory; generated from `simulator` when absent.
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Write model checkpoints next to the results.
    pub checkpoints: bool,
    pub simulator: SimConfig,
    pub backbone: BackboneConfig,
    pub classifier: ClassifierConfig,
    pub selector: SelectorConfig,
    pub sweep: Vec<SweepCell>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            folds: 5,
            split: SplitMode::Folds,
            coverages: vec![0.8, 0.9],
            variants: Variant::ALL.to_vec(),
            baselines: Baseline::ALL.to_vec(),
            ensemble_seeds: SEEDS.to_vec(),
            mc_passes: 20,
            threads: 0,
            dataset: None,
            out_dir: PathBuf::from("runs/default"),
            checkpoints: true,
            simulator: SimConfig::default(),
            backbone: BackboneConfig::default(),
            classifier: ClassifierConfig::default(),
            selector: SelectorConfig::default(),
            sweep: default_sweep_grid(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Seeds both fold assignment and the simulator.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.simulator.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ChaseError::Config(m));
        if self.split == SplitMode::Folds && self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.coverages.is_empty() || self.coverages.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
            return bad(format!("coverage targets must lie in (0, 1], got {:?}", self.coverages));
        }
        if self.variants.is_empty() && self.baselines.is_empty() {
            return bad("no methods selected".into());
        }
        if self.ensemble_seeds.is_empty() {
            return bad("ensemble_seeds must not be empty".into());
        }
        let mut seeds = self.ensemble_seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.ensemble_seeds.len() {
            return bad("ensemble_seeds must be distinct".into());
        }
        if self.baselines.contains(&Baseline::DeepEnsemble) && self.ensemble_seeds.len() < 2 {
            return bad("the deep ensemble baseline needs at least 2 seeds".into());
        }
        if self.baselines.contains(&Baseline::McDropout) && self.mc_passes < 2 {
            return bad(format!("MC Dropout needs at least 2 passes, got {}", self.mc_passes));
        }
        self.simulator.validate()?;
        self.backbone.validate()?;
        self.classifier.validate()?;
        self.selector.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        content_hash_json(self)
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.variants.iter().map(|&v| Method::Variant(v)).collect();
        m.extend(self.baselines.iter().map(|&b| Method::Baseline(b)));
        m.sort();
        m.dedup();
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_overrides_nested_values() {
        let cfg = RunConfig::from_toml_str("folds = 3\nvariants = [\"F\", \"L\"]\n[selector]\ngamma = 0.5\n").unwrap();
        assert_eq!(cfg.folds, 3);
        assert_eq!(cfg.variants, vec![Variant::F, Variant::L]);
        assert_eq!(cfg.selector.gamma, 0.5);
        assert_eq!(cfg.selector.w, SelectorConfig::default().w);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in ["coverages = [0.0]", "folds = 1", "ensemble_seeds = [1, 1]", "unknown = 3", "variants = [\"Q\"]"] {
            assert!(RunConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn method_names_parse_back() {
        let cfg = RunConfig::default();
        for m in cfg.methods() {
            assert_eq!(Method::from_name(m.name()).unwrap(), m);
        }
        assert_eq!(default_sweep_grid().len(), 9);
        assert_eq!(SweepCell { g: 62, w: 66, c: 10 }.weights(), (0.62, 0.66, 0.10));
    }
}
