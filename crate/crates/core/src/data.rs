//! Model-facing sequence data. Training code only ever sees features and
//! labels; ambiguity metadata stays with the harness.

use serde::{Deserialize, Serialize};

use crate::error::{ChaseError, Result};
use crate::simulator::{Label, FEATURE_DIM};

pub type Frame = [f64; FEATURE_DIM];

pub const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Vec<Frame>,
    pub label: Label,
}

/// Per-feature z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Frame,
    pub std: Frame,
}

impl Normalizer {
    /// Statistics over every frame of every sequence. The standard
    /// deviation is the population value, floored at [`STD_FLOOR`].
    pub fn fit<'a, I>(sequences: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [Frame]>,
    {
        let mut n = 0usize;
        let mut sum = [0.0; FEATURE_DIM];
        let mut sq = [0.0; FEATURE_DIM];
        let seqs: Vec<&[Frame]> = sequences.into_iter().collect();
        for s in &seqs {
            for f in s.iter() {
                n += 1;
                for j in 0..FEATURE_DIM {
                    sum[j] += f[j];
                }
            }
        }
        if n == 0 {
            return Err(ChaseError::InvalidInput("cannot fit normalizer on empty data".into()));
        }
        let mean = sum.map(|s| s / n as f64);
        for s in &seqs {
            for f in s.iter() {
                for j in 0..FEATURE_DIM {
                    sq[j] += (f[j] - mean[j]).powi(2);
                }
            }
        }
        let std = sq.map(|v| (v / n as f64).sqrt().max(STD_FLOOR));
        Ok(Normalizer { mean, std })
    }

    pub fn apply(&self, frames: &[Frame]) -> Vec<Frame> {
        frames
            .iter()
            .map(|f| std::array::from_fn(|j| (f[j] - self.mean[j]) / self.std[j]))
            .collect()
    }
}

/// Packs `steps` frames of each sequence into time-major rows:
/// `out[t]` is a `batch x FEATURE_DIM` row-major block.
pub fn time_major(batch: &[&[Frame]], steps: usize) -> Result<Vec<Vec<f64>>> {
    if let Some(s) = batch.iter().find(|s| s.len() < steps) {
        return Err(ChaseError::InvalidInput(format!("sequence of {} frames, need {steps}", s.len())));
    }
    Ok((0..steps)
        .map(|t| batch.iter().flat_map(|s| s[t].iter().copied()).collect())
        .collect())
}
