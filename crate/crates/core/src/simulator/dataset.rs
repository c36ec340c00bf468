use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{sample_activity_profile, simulate_pair, Label, PairGeometry, Regime, SequenceRecord, SimConfig, SplitTag};
use crate::error::{ChaseError, Result};
use crate::rng::{stream_rng, Stream};

/// Ambiguity strata used for generation and stratification.
pub const AMBIGUITY_BINS: usize = 4;

/// Stratum index of an ambiguity level: `[0,.25) [.25,.5) [.5,.75) [.75,1]`.
pub fn ambiguity_bin(alpha: f64) -> usize {
    ((alpha * AMBIGUITY_BINS as f64).floor() as usize).min(AMBIGUITY_BINS - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub total: usize,
    pub connected: usize,
    pub not_connected: usize,
    pub ambiguous: usize,
    /// `label/regime` -> count.
    pub cells: BTreeMap<String, usize>,
    pub splits: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: SimConfig,
    pub seed: u64,
    pub counts: DatasetCounts,
    /// SHA-256 of the JSON-lines file.
    pub content_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<SequenceRecord>,
    pub config: SimConfig,
}

impl Dataset {
    pub fn counts(&self) -> DatasetCounts {
        let mut cells = BTreeMap::new();
        let mut splits = BTreeMap::new();
        for r in &self.records {
            let regime = match r.regime {
                Regime::Intermittent => "intermittent",
                Regime::ShortLocal => "short_local",
            };
            *cells.entry(format!("{}/{}", r.label.as_str(), regime)).or_insert(0) += 1;
            let split = match r.split {
                SplitTag::Train => "train",
                SplitTag::Val => "val",
                SplitTag::Test => "test",
            };
            *splits.entry(split.to_string()).or_insert(0) += 1;
        }
        DatasetCounts {
            total: self.records.len(),
            connected: self.records.iter().filter(|r| r.label == Label::Connected).count(),
            not_connected: self.records.iter().filter(|r| r.label == Label::NotConnected).count(),
            ambiguous: self.records.iter().filter(|r| r.ambiguous).count(),
            cells,
            splits,
        }
    }

    pub fn manifest(&self) -> Result<DatasetManifest> {
        Ok(DatasetManifest {
            config: self.config.clone(),
            seed: self.config.seed,
            counts: self.counts(),
            content_hash: content_hash(&jsonl_bytes(&self.records)?),
        })
    }
}

/// Generates the full matched-pair dataset.
///
/// Pairs are split between regimes by `regime_mix`; inside a regime the
/// `j`-th pair falls in ambiguity stratum `j mod 4` and draws `alpha`
/// uniformly inside it. Each pair draws from its own stream keyed by the
/// pair id, so generation order does not matter.
pub fn generate_dataset(config: &SimConfig) -> Result<Dataset> {
    config.validate()?;
    let pairs = config.sequences / 2;
    let intermittent = (config.regime_mix.intermittent * pairs as f64).round() as usize;
    let seed = config.seed;
    let mut plan: Vec<(u64, Regime, usize)> = Vec::with_capacity(pairs);
    for j in 0..pairs {
        let (regime, within) = if j < intermittent {
            (Regime::Intermittent, j)
        } else {
            (Regime::ShortLocal, j - intermittent)
        };
        plan.push((j as u64, regime, within % AMBIGUITY_BINS));
    }

    let split_of = assign_splits(&plan, config);

    let mut records = Vec::with_capacity(config.sequences);
    for &(pair_id, regime, stratum) in &plan {
        let mut pair_rng = stream_rng(seed, Stream::Data, pair_id * 4);
        let alpha = (stratum as f64 + pair_rng.random::<f64>()) / AMBIGUITY_BINS as f64;
        let profile = sample_activity_profile(regime, config.frames, &mut pair_rng);
        let geom = PairGeometry::sample(config, &mut pair_rng);
        for (k, label) in Label::ALL.into_iter().enumerate() {
            let mut rng = stream_rng(seed, Stream::Data, pair_id * 4 + 1 + k as u64);
            let mut rec = simulate_pair(pair_id * 2 + k as u64, pair_id, label, &profile, &geom, alpha, config, &mut rng);
            rec.split = split_of[pair_id as usize];
            records.push(rec);
        }
    }
    Ok(Dataset { records, config: config.clone() })
}

/// Fixed split tags, stratified by (regime, ambiguity stratum) at the pair level.
fn assign_splits(plan: &[(u64, Regime, usize)], config: &SimConfig) -> Vec<SplitTag> {
    let sc = config.split_counts;
    let total = (sc.train + sc.val + sc.test) as f64;
    let mut cells: BTreeMap<(Regime, usize), Vec<u64>> = BTreeMap::new();
    for &(id, regime, stratum) in plan {
        cells.entry((regime, stratum)).or_default().push(id);
    }
    let mut out = vec![SplitTag::Train; plan.len()];
    let mut rng = stream_rng(config.seed, Stream::Split, 0);
    for ids in cells.values_mut() {
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_test = ((sc.test as f64 / total) * n as f64).round() as usize;
        let n_val = (((sc.val as f64 / total) * n as f64).round() as usize).min(n - n_test);
        for (i, id) in ids.iter().enumerate() {
            out[*id as usize] = if i < n_test {
                SplitTag::Test
            } else if i < n_test + n_val {
                SplitTag::Val
            } else {
                SplitTag::Train
            };
        }
    }
    out
}

pub fn jsonl_bytes(records: &[SequenceRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_jsonl(path: &Path, records: &[SequenceRecord]) -> Result<String> {
    let bytes = jsonl_bytes(records)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(content_hash(&bytes))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<SequenceRecord>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SequenceRecord = serde_json::from_str(&line)
            .map_err(|e| ChaseError::InvalidInput(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes `dataset.jsonl` and `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let hash = write_jsonl(&dir.join("dataset.jsonl"), &dataset.records)?;
    let manifest = DatasetManifest {
        config: dataset.config.clone(),
        seed: dataset.config.seed,
        counts: dataset.counts(),
        content_hash: hash,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
