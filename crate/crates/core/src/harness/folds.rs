use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ChaseError, Result};
use crate::rng::{stream_rng, Stream};
use crate::simulator::{ambiguity_bin, Regime, SequenceRecord, SplitTag};

/// Share of each training fold held out for validation.
pub const VALIDATION_SHARE: f64 = 0.2;

/// Sequence ids of one fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

type Stratum = (Regime, usize);

/// Pair ids per `(regime, ambiguity bin)`. Both members of a pair share
/// the regime and ambiguity level, so each stratum is label balanced.
fn pair_strata(records: &[SequenceRecord]) -> Result<BTreeMap<Stratum, Vec<u64>>> {
    let mut members: BTreeMap<u64, Vec<&SequenceRecord>> = BTreeMap::new();
    for r in records {
        members.entry(r.pair_id).or_default().push(r);
    }
    let mut strata: BTreeMap<Stratum, Vec<u64>> = BTreeMap::new();
    for (pair, ms) in &members {
        let consistent = ms.len() == 2
            && ms[0].label != ms[1].label
            && ms[0].regime == ms[1].regime
            && ms[0].alpha == ms[1].alpha;
        if !consistent {
            return Err(ChaseError::InvalidInput(format!("pair {pair} is not a matched connected/not-connected pair")));
        }
        strata.entry((ms[0].regime, ambiguity_bin(ms[0].alpha))).or_default().push(*pair);
    }
    Ok(strata)
}

fn expand(records: &[SequenceRecord], pairs: &[u64]) -> Vec<u64> {
    let mut set: Vec<u64> = pairs.to_vec();
    set.sort_unstable();
    let mut ids: Vec<u64> = records.iter().filter(|r| set.binary_search(&r.pair_id).is_ok()).map(|r| r.id).collect();
    ids.sort_unstable();
    ids
}

/// Stratified k-fold assignment over matched pairs.
///
/// Pairs in each stratum are shuffled and dealt round-robin, continuing the
/// rotation across strata so fold sizes differ by at most one pair. The
/// validation split takes the first 20% (rounded) of each stratum's
/// remaining pairs in shuffled order.
pub fn make_folds(records: &[SequenceRecord], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(ChaseError::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut strata = pair_strata(records)?;
    if let Some((s, ids)) = strata.iter().find(|(_, ids)| ids.len() < k) {
        return Err(ChaseError::Config(format!("stratum {s:?} has {} pairs, fewer than {k} folds", ids.len())));
    }
    let mut rng = stream_rng(seed, Stream::Split, 10);
    let mut offset = 0;
    // Per stratum, the pairs dealt to each fold in shuffled order.
    let mut dealt: Vec<Vec<Vec<u64>>> = Vec::new();
    for ids in strata.values_mut() {
        ids.shuffle(&mut rng);
        let mut per_fold = vec![Vec::new(); k];
        for (i, &p) in ids.iter().enumerate() {
            per_fold[(offset + i) % k].push(p);
        }
        offset = (offset + ids.len()) % k;
        dealt.push(per_fold);
    }
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let (mut test, mut val, mut train) = (Vec::new(), Vec::new(), Vec::new());
        for per_fold in &dealt {
            test.extend_from_slice(&per_fold[f]);
            // Remaining pairs in a fold-independent order.
            let rest: Vec<u64> = (0..k).filter(|&g| g != f).flat_map(|g| per_fold[g].iter().copied()).collect();
            let n_val = (rest.len() as f64 * VALIDATION_SHARE).round() as usize;
            val.extend_from_slice(&rest[..n_val]);
            train.extend_from_slice(&rest[n_val..]);
        }
        folds.push(FoldSplit { fold: f, train: expand(records, &train), val: expand(records, &val), test: expand(records, &test) });
    }
    Ok(folds)
}

/// The simulator's fixed split tags as one fold.
pub fn fixed_split(records: &[SequenceRecord]) -> Result<FoldSplit> {
    let ids = |tag: SplitTag| -> Vec<u64> {
        let mut v: Vec<u64> = records.iter().filter(|r| r.split == tag).map(|r| r.id).collect();
        v.sort_unstable();
        v
    };
    let split = FoldSplit { fold: 0, train: ids(SplitTag::Train), val: ids(SplitTag::Val), test: ids(SplitTag::Test) };
    if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return Err(ChaseError::Config("fixed split needs nonempty train, val and test tags".into()));
    }
    Ok(split)
}
