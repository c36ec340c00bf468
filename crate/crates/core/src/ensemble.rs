//! Seed ensembles of backbones: averaging, dispersion signals, and fusion
//! of hypothesis and auxiliary probabilities.

use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, BackboneOutput, HeadMode};
use crate::data::Frame;
use crate::error::{ChaseError, Result};
use crate::simulator::Label;

/// Default ensemble seeds.
pub const SEEDS: [u64; 3] = [42, 143, 244];

/// Number of evenly spaced fusion weights in `[0, 1]`.
pub const FUSION_GRID: usize = 21;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub pi_hyp: [f64; 2],
    pub pi_aux: [f64; 2],
    pub pi_fused: [f64; 2],
    /// Mean `ℓ_n − ℓ_c`.
    pub gap: f64,
    pub sigma_hyp: f64,
    pub sigma_aux: f64,
    /// Fraction of members whose fused prediction disagrees with the vote.
    pub delta: f64,
    pub prediction: Label,
}

/// `α·π_hyp + (1 − α)·π_aux`.
pub fn fuse(pi_hyp: [f64; 2], pi_aux: [f64; 2], alpha: f64) -> [f64; 2] {
    [
        alpha * pi_hyp[0] + (1.0 - alpha) * pi_aux[0],
        alpha * pi_hyp[1] + (1.0 - alpha) * pi_aux[1],
    ]
}

/// Most probable class; an exact tie commits to connected.
pub fn argmax2(p: [f64; 2]) -> Label {
    if p[0] >= p[1] {
        Label::Connected
    } else {
        Label::NotConnected
    }
}

pub fn fusion_grid() -> impl Iterator<Item = f64> {
    (0..FUSION_GRID).map(|i| i as f64 / (FUSION_GRID - 1) as f64)
}

/// Sum in ascending order so the result does not depend on member order.
fn ordered_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().sum::<f64>() / n
}

/// Population standard deviation via `Σ_ij (x_i − x_j)² / 2n²`, which is
/// exactly zero for identical values.
fn population_std(v: &[f64]) -> f64 {
    let sq: Vec<f64> = v.iter().flat_map(|a| v.iter().map(move |b| (a - b).powi(2))).collect();
    (ordered_mean(sq) / 2.0).sqrt()
}

/// Combines one sequence's member outputs under fusion weight `alpha`.
pub fn summarize(members: &[BackboneOutput], alpha: f64) -> Result<EnsembleSummary> {
    if members.is_empty() {
        return Err(ChaseError::Config("ensemble needs at least one member".into()));
    }
    let hyp_c: Vec<f64> = members.iter().map(|m| m.pi_hyp[0]).collect();
    let aux_c: Vec<f64> = members.iter().map(|m| m.pi_aux[0]).collect();
    let mh = ordered_mean(hyp_c.clone());
    let ma = ordered_mean(aux_c.clone());
    let pi_hyp = [mh, 1.0 - mh];
    let pi_aux = [ma, 1.0 - ma];
    let pi_fused = fuse(pi_hyp, pi_aux, alpha);
    let gap = ordered_mean(members.iter().map(|m| m.gap()).collect());

    let votes: Vec<Label> = members.iter().map(|m| argmax2(fuse(m.pi_hyp, m.pi_aux, alpha))).collect();
    let n_c = votes.iter().filter(|&&v| v == Label::Connected).count();
    let majority = if 2 * n_c >= votes.len() { Label::Connected } else { Label::NotConnected };
    let dissent = votes.iter().filter(|&&v| v != majority).count();

    Ok(EnsembleSummary {
        pi_hyp,
        pi_aux,
        pi_fused,
        gap,
        sigma_hyp: population_std(&hyp_c),
        sigma_aux: population_std(&aux_c),
        delta: dissent as f64 / members.len() as f64,
        prediction: argmax2(pi_fused),
    })
}

/// Transposes per-member output lists into per-sequence member lists.
pub fn by_sequence(per_member: &[Vec<BackboneOutput>]) -> Result<Vec<Vec<BackboneOutput>>> {
    let n = per_member.first().map_or(0, Vec::len);
    if per_member.iter().any(|m| m.len() != n) {
        return Err(ChaseError::Shape("ensemble members scored different numbers of sequences".into()));
    }
    Ok((0..n).map(|i| per_member.iter().map(|m| m[i]).collect()).collect())
}

/// Picks the grid weight with the highest no-abstain accuracy on labelled
/// sequences; ties go to the larger weight.
pub fn tune_fusion(per_sequence: &[Vec<BackboneOutput>], labels: &[Label]) -> Result<f64> {
    if per_sequence.len() != labels.len() || labels.is_empty() {
        return Err(ChaseError::InvalidInput("fusion tuning needs one label per scored sequence".into()));
    }
    let means: Vec<([f64; 2], [f64; 2])> = per_sequence
        .iter()
        .map(|m| summarize(m, 1.0).map(|s| (s.pi_hyp, s.pi_aux)))
        .collect::<Result<_>>()?;
    let mut best = (0usize, 0.0);
    for alpha in fusion_grid() {
        let correct = means.iter().zip(labels).filter(|((h, a), &y)| argmax2(fuse(*h, *a, alpha)) == y).count();
        if correct >= best.0 {
            best = (correct, alpha);
        }
    }
    Ok(best.1)
}

/// Trained members plus the tuned fusion weight.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub members: Vec<Backbone>,
    pub alpha: f64,
    pub mode: HeadMode,
}

impl Ensemble {
    pub fn new(members: Vec<Backbone>, mode: HeadMode) -> Result<Self> {
        if members.is_empty() {
            return Err(ChaseError::Config("ensemble needs at least one member".into()));
        }
        Ok(Ensemble { members, alpha: 1.0, mode })
    }

    /// Per-sequence member outputs.
    pub fn member_outputs(&self, seqs: &[&[Frame]]) -> Result<Vec<Vec<BackboneOutput>>> {
        let per_member = self.members.iter().map(|m| m.predict(seqs, self.mode)).collect::<Result<Vec<_>>>()?;
        by_sequence(&per_member)
    }

    pub fn tune(&mut self, seqs: &[&[Frame]], labels: &[Label]) -> Result<f64> {
        self.alpha = tune_fusion(&self.member_outputs(seqs)?, labels)?;
        Ok(self.alpha)
    }

    pub fn summarize(&self, seqs: &[&[Frame]]) -> Result<Vec<EnsembleSummary>> {
        self.member_outputs(seqs)?.iter().map(|m| summarize(m, self.alpha)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(p_c: f64, aux_c: f64) -> BackboneOutput {
        // ℓ values chosen so that softmax(−ℓ_c, −ℓ_n) has connected mass p_c.
        let l_n = (p_c / (1.0 - p_c)).ln();
        BackboneOutput::new(0.0, l_n, [aux_c, 1.0 - aux_c])
    }

    #[test]
    fn single_member_has_no_dispersion() {
        let s = summarize(&[out(0.8, 0.3)], 0.5).unwrap();
        assert_eq!((s.sigma_hyp, s.sigma_aux, s.delta), (0.0, 0.0, 0.0));
        assert!((s.pi_fused[0] - 0.55).abs() < 1e-12);
    }

    #[test]
    fn identical_members_have_no_dispersion() {
        let m = out(0.7, 0.6);
        let s = summarize(&[m, m, m], 0.4).unwrap();
        assert_eq!((s.sigma_hyp, s.sigma_aux, s.delta), (0.0, 0.0, 0.0));
    }

    #[test]
    fn one_dissenting_member() {
        let s = summarize(&[out(0.9, 0.9), out(0.8, 0.8), out(0.2, 0.2)], 1.0).unwrap();
        assert!((s.delta - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.prediction, Label::Connected);
    }

    #[test]
    fn dispersion_is_population_std() {
        let s = summarize(&[out(0.9, 0.5), out(0.6, 0.5), out(0.3, 0.5)], 1.0).unwrap();
        let want = ((0.09 + 0.0 + 0.09) / 3.0f64).sqrt();
        assert!((s.sigma_hyp - want).abs() < 1e-12);
        assert_eq!(s.sigma_aux, 0.0);
    }

    #[test]
    fn empty_ensemble_is_config_error() {
        assert!(matches!(summarize(&[], 1.0), Err(ChaseError::Config(_))));
    }

    #[test]
    fn fusion_tuning_edge_cases() {
        let labels = [Label::Connected, Label::NotConnected, Label::Connected, Label::NotConnected];
        // Perfect hypothesis softmax, auxiliary always says connected.
        let seqs: Vec<Vec<BackboneOutput>> = labels
            .iter()
            .map(|&y| vec![out(if y == Label::Connected { 0.9 } else { 0.1 }, 0.95)])
            .collect();
        assert_eq!(tune_fusion(&seqs, &labels).unwrap(), 1.0);
        // Identical probabilities: every weight ties.
        let same: Vec<Vec<BackboneOutput>> = [0.7, 0.2, 0.4, 0.6].iter().map(|&p| vec![out(p, p)]).collect();
        assert_eq!(tune_fusion(&same, &labels).unwrap(), 1.0);
        // Only the auxiliary branch is right.
        let aux: Vec<Vec<BackboneOutput>> = labels
            .iter()
            .map(|&y| vec![out(0.6, if y == Label::Connected { 0.9 } else { 0.1 })])
            .collect();
        let a = tune_fusion(&aux, &labels).unwrap();
        assert!(a < 1.0);
    }

    #[test]
    fn zero_weight_is_auxiliary() {
        let h = [0.3, 0.7];
        let a = [0.9, 0.1];
        assert_eq!(fuse(h, a, 0.0), a);
        assert_eq!(fuse(h, a, 1.0), h);
        assert_eq!(fusion_grid().count(), 21);
        assert_eq!(fusion_grid().nth(1), Some(0.05));
    }
}
