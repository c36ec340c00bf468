//! Selective-prediction metrics on integer counts, and the exact one-sided
//! paired Wilcoxon signed-rank test.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ChaseError, Result};
use crate::simulator::Label;

/// A method's output on one test sequence, before thresholding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    /// Forced-commitment prediction.
    pub prediction: Label,
    pub label: Label,
    pub ambiguous: bool,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Commit(Label),
    Abstain,
}

/// Final three-way decision at a threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub decision: Decision,
    pub label: Label,
    pub ambiguous: bool,
    pub score: f64,
}

impl ScoredRecord {
    /// Accepts when `score >= tau`.
    pub fn decide(&self, tau: f64) -> DecisionRecord {
        let decision = if self.score >= tau { Decision::Commit(self.prediction) } else { Decision::Abstain };
        DecisionRecord { decision, label: self.label, ambiguous: self.ambiguous, score: self.score }
    }
}

pub fn decide_all(records: &[ScoredRecord], tau: f64) -> Vec<DecisionRecord> {
    records.iter().map(|r| r.decide(tau)).collect()
}

/// A ratio kept as counts; `den == 0` is the undefined state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub num: usize,
    pub den: usize,
}

impl Rate {
    pub fn value(self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }

    pub fn complement(self) -> Rate {
        Rate { num: self.den - self.num, den: self.den }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{:.2}", 100.0 * v),
            None => f.write_str("—"),
        }
    }
}

fn nonempty<T>(xs: &[T], what: &str) -> Result<()> {
    if xs.is_empty() {
        Err(ChaseError::InvalidInput(format!("{what} needs at least one record")))
    } else {
        Ok(())
    }
}

pub fn no_abstain_accuracy(preds: &[Label], labels: &[Label]) -> Result<Rate> {
    nonempty(preds, "no-abstain accuracy")?;
    if preds.len() != labels.len() {
        return Err(ChaseError::Shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let num = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(Rate { num, den: preds.len() })
}

/// Risk among accepted records and realized coverage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskCoverage {
    /// Errors over accepted; undefined when nothing is accepted.
    pub risk: Rate,
    pub coverage: Rate,
}

pub fn risk_at_coverage(records: &[ScoredRecord], tau: f64) -> Result<RiskCoverage> {
    nonempty(records, "risk at coverage")?;
    let accepted: Vec<&ScoredRecord> = records.iter().filter(|r| r.score >= tau).collect();
    let errors = accepted.iter().filter(|r| r.prediction != r.label).count();
    Ok(RiskCoverage {
        risk: Rate { num: errors, den: accepted.len() },
        coverage: Rate { num: accepted.len(), den: records.len() },
    })
}

pub fn three_way_accuracy(records: &[DecisionRecord]) -> Result<Rate> {
    nonempty(records, "three-way accuracy")?;
    let num = records
        .iter()
        .filter(|r| match r.decision {
            Decision::Commit(p) => p == r.label,
            Decision::Abstain => r.ambiguous,
        })
        .count();
    Ok(Rate { num, den: records.len() })
}

/// Share of abstentions on truly ambiguous records; undefined with no
/// abstentions.
pub fn abstain_alignment(records: &[DecisionRecord]) -> Rate {
    let abstained = records.iter().filter(|r| r.decision == Decision::Abstain);
    let (num, den) = abstained.fold((0, 0), |(n, d), r| (n + r.ambiguous as usize, d + 1));
    Rate { num, den }
}

/// Every metric for one method at one threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tau: f64,
    pub n: usize,
    pub no_abstain_acc: Rate,
    pub risk: Rate,
    pub coverage: Rate,
    pub three_way_acc: Rate,
    pub abstain_alignment: Rate,
}

pub fn evaluate(records: &[ScoredRecord], tau: f64) -> Result<MetricReport> {
    let preds: Vec<Label> = records.iter().map(|r| r.prediction).collect();
    let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
    let decisions = decide_all(records, tau);
    let rc = risk_at_coverage(records, tau)?;
    Ok(MetricReport {
        tau,
        n: records.len(),
        no_abstain_acc: no_abstain_accuracy(&preds, &labels)?,
        risk: rc.risk,
        coverage: rc.coverage,
        three_way_acc: three_way_accuracy(&decisions)?,
        abstain_alignment: abstain_alignment(&decisions),
    })
}

/// `(coverage, risk)` after accepting the top-k scores, for each k.
/// Tied scores enter together, so every point is a reachable threshold.
pub fn risk_coverage_curve(records: &[ScoredRecord]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<&ScoredRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let n = records.len() as f64;
    let mut out = Vec::new();
    let mut errors = 0usize;
    for (i, r) in sorted.iter().enumerate() {
        errors += (r.prediction != r.label) as usize;
        if sorted.get(i + 1).is_none_or(|next| next.score != r.score) {
            out.push(((i + 1) as f64 / n, errors as f64 / (i + 1) as f64));
        }
    }
    out
}

/// Result of the one-sided test that the paired differences are shifted
/// above zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Nonzero differences used.
    pub n: usize,
    pub w_plus: f64,
    /// `None` when every difference is zero.
    pub p_value: Option<f64>,
}

/// Midranks of `|d|`, doubled so ties stay integral.
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean; doubled that is i+j+2.
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Exact one-sided signed-rank test. Zero differences are discarded and
/// tied magnitudes get average ranks. Up to 20 differences are enumerated
/// sign pattern by sign pattern; larger samples use the same exact null
/// distribution built by counting.
pub fn wilcoxon_one_sided(diffs: &[f64]) -> Result<WilcoxonResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(ChaseError::InvalidInput("Wilcoxon differences must be finite".into()));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return Ok(WilcoxonResult { n: 0, w_plus: 0.0, p_value: None });
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let observed: u64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let (hits, total) = if n <= 20 {
        let hits = (0u64..1 << n)
            .filter(|mask| {
                let w: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
                w >= observed
            })
            .count();
        (hits as f64, (1u64 << n) as f64)
    } else {
        let max: u64 = ranks.iter().sum();
        let mut counts = vec![0f64; max as usize + 1];
        counts[0] = 1.0;
        for &r in &ranks {
            for w in (r as usize..=max as usize).rev() {
                counts[w] += counts[w - r as usize];
            }
        }
        (counts[observed as usize..].iter().sum(), 2f64.powi(n as i32))
    };
    Ok(WilcoxonResult { n, w_plus: observed as f64 / 2.0, p_value: Some(hits / total) })
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    Some((m, v.sqrt()))
}
