use crate::error::{ChaseError, Result};
use crate::numerics::ops::sigmoid;

use super::{Label, SequenceRecord, FEATURE_DIM};

const STEPS: usize = 2000;
const LR: f64 = 0.5;
const L2: f64 = 1e-4;

fn summary(r: &SequenceRecord) -> [f64; FEATURE_DIM] {
    let mut m = [0.0; FEATURE_DIM];
    for f in &r.features {
        for (a, x) in m.iter_mut().zip(f) {
            *a += x;
        }
    }
    m.map(|a| a / r.features.len() as f64)
}

struct Logistic {
    mean: [f64; FEATURE_DIM],
    std: [f64; FEATURE_DIM],
    w: [f64; FEATURE_DIM],
    b: f64,
}

impl Logistic {
    fn standardize(&self, x: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|j| (x[j] - self.mean[j]) / self.std[j])
    }

    fn logit(&self, x: &[f64; FEATURE_DIM]) -> f64 {
        self.standardize(x).iter().zip(&self.w).map(|(a, w)| a * w).sum::<f64>() + self.b
    }

    /// Full-batch gradient descent on the mean log loss.
    fn fit(xs: &[[f64; FEATURE_DIM]], ys: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean: [f64; FEATURE_DIM] = std::array::from_fn(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n);
        let std: [f64; FEATURE_DIM] = std::array::from_fn(|j| {
            (xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt().max(1e-9)
        });
        let mut m = Logistic { mean, std, w: [0.0; FEATURE_DIM], b: 0.0 };
        let zs: Vec<[f64; FEATURE_DIM]> = xs.iter().map(|x| m.standardize(x)).collect();
        for _ in 0..STEPS {
            let mut gw = m.w.map(|w| L2 * w);
            let mut gb = 0.0;
            for (z, y) in zs.iter().zip(ys) {
                let err = (sigmoid(z.iter().zip(&m.w).map(|(a, w)| a * w).sum::<f64>() + m.b) - y) / n;
                for (g, a) in gw.iter_mut().zip(z) {
                    *g += err * a;
                }
                gb += err;
            }
            for (w, g) in m.w.iter_mut().zip(&gw) {
                *w -= LR * g;
            }
            m.b -= LR * gb;
        }
        m
    }
}

/// Held-out accuracy of a logistic probe on per-sequence feature means.
///
/// Pairs are ordered by id and alternately assigned to two halves; one half
/// trains the probe and the other tests it, then the roles swap; the two accuracies are pooled. Keeping a pair on one side stops
/// the shared activity timing from leaking across the split.
pub fn separability_probe(records: &[SequenceRecord]) -> Result<f64> {
    let mut pairs: Vec<u64> = records.iter().map(|r| r.pair_id).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let half = |r: &SequenceRecord| pairs.binary_search(&r.pair_id).unwrap_or(0) % 2;
    let mut correct = 0usize;
    let mut total = 0usize;
    for parity in 0..2 {
        let (train, test): (Vec<&SequenceRecord>, Vec<&SequenceRecord>) =
            records.iter().partition(|r| half(r) == parity);
        let has_both = |rs: &[&SequenceRecord]| Label::ALL.iter().all(|l| rs.iter().any(|r| r.label == *l));
        if !has_both(&train) || test.is_empty() {
            return Err(ChaseError::InvalidInput("probe needs both labels on each side of the pair split".into()));
        }
        let xs: Vec<[f64; FEATURE_DIM]> = train.iter().map(|r| summary(r)).collect();
        let ys: Vec<f64> = train.iter().map(|r| if r.label == Label::Connected { 1.0 } else { 0.0 }).collect();
        let model = Logistic::fit(&xs, &ys);
        correct += test.iter().filter(|r| (model.logit(&summary(r)) >= 0.0) == (r.label == Label::Connected)).count();
        total += test.len();
    }
    Ok(correct as f64 / total as f64)
}
