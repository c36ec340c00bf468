//! Cost-aware ranking selector.
//!
//! A small perceptron maps ensemble signals `φ(x)` to a raw cost logit `r`.
//! It is trained on the budgeted accept cost `max(E, γ·a)` with a
//! cross-entropy term and two pairwise ranking terms, and commits when the
//! accept score `1 − σ(r)` clears a coverage-calibrated threshold.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSummary;
use crate::error::{ChaseError, Result};
use crate::numerics::ops::{bce_with_logit, dropout_mask, entropy, sigmoid, softplus, tanh_inplace};
use crate::numerics::{AdamConfig, Linear, ParamSet, Tensor};
use crate::rng::{stream_rng, Stream, StreamRng};
use crate::train::{fit, Schedule, TrainLog};

pub const PHI_DIM: usize = 9;

pub const PHI_NAMES: [&str; PHI_DIM] = [
    "pi_hyp_pred",
    "pi_aux_pred",
    "pi_fused_pred",
    "gap",
    "abs_gap",
    "sigma_hyp",
    "sigma_aux",
    "delta",
    "fused_entropy",
];

// Key for the held-out pair sample so validation loss is comparable across epochs.
const HOLDOUT_PAIR_KEY: u64 = 0x5e1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub gamma: f64,
    pub w: f64,
    pub c: f64,
    pub rank_margin: f64,
    pub pair_cap: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of selector samples held out for early stopping.
    pub holdout: f64,
    /// Include the auxiliary-branch signals in `φ`.
    pub use_aux: bool,
    pub seed: u64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            gamma: 0.62,
            w: 0.66,
            c: 0.10,
            rank_margin: 1.0,
            pair_cap: 512,
            hidden: 24,
            dropout: 0.1,
            epochs: 80,
            patience: 8,
            batch_size: 64,
            lr: 1e-3,
            holdout: 0.2,
            use_aux: true,
            seed: 42,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(ChaseError::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.w >= 0.0 && self.c >= 0.0) {
            return Err(ChaseError::Config("ranking weights must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ChaseError::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(ChaseError::Config("holdout fraction must lie in (0, 1)".into()));
        }
        if self.hidden == 0 || self.batch_size < 2 || self.pair_cap == 0 {
            return Err(ChaseError::Config("selector width, batch size and pair cap must be positive".into()));
        }
        Ok(())
    }
}

/// `φ(x)` in the fixed order of [`PHI_NAMES`]. Without `use_aux` the
/// auxiliary components are zero.
pub fn build_features(s: &EnsembleSummary, use_aux: bool) -> [f64; PHI_DIM] {
    let k = s.prediction.index();
    let (aux, sigma_aux) = if use_aux { (s.pi_aux[k], s.sigma_aux) } else { (0.0, 0.0) };
    [
        s.pi_hyp[k],
        aux,
        s.pi_fused[k],
        s.gap,
        s.gap.abs(),
        s.sigma_hyp,
        sigma_aux,
        s.delta,
        entropy(&s.pi_fused),
    ]
}

/// `max(E, γ·a)`.
pub fn accept_cost(error: bool, ambiguous: bool, gamma: f64) -> f64 {
    let e: f64 = if error { 1.0 } else { 0.0 };
    let a = if ambiguous { gamma } else { 0.0 };
    e.max(a)
}

/// Accept score `1 − σ(r)`.
pub fn accept_score(r: f64) -> f64 {
    sigmoid(-r)
}

/// All ordered pairs `(i, j)` with `z_i > z_j`, subsampled uniformly
/// without replacement to at most `cap`.
pub fn sample_pairs(z: &[f64], cap: usize, rng: &mut StreamRng) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, zi) in z.iter().enumerate() {
        for (j, zj) in z.iter().enumerate() {
            if zi > zj {
                pairs.push((i, j));
            }
        }
    }
    if pairs.len() <= cap {
        return pairs;
    }
    let mut keep = sample(rng, pairs.len(), cap).into_vec();
    keep.sort_unstable();
    keep.into_iter().map(|k| pairs[k]).collect()
}

/// Mean over `pairs` of `(z_i − z_j)·softplus(m − (r_i − r_j))`; zero when
/// there are no pairs. With `grad`, `scale · ∂/∂r` is accumulated.
pub fn rank_loss_on_pairs(r: &[f64], z: &[f64], pairs: &[(usize, usize)], margin: f64, scale: f64, grad: Option<&mut [f64]>) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let mut loss = 0.0;
    let mut grad = grad;
    for &(i, j) in pairs {
        let wgt = z[i] - z[j];
        let u = margin - (r[i] - r[j]);
        loss += wgt * softplus(u);
        if let Some(g) = grad.as_deref_mut() {
            let d = scale * wgt * sigmoid(u) / n;
            g[i] -= d;
            g[j] += d;
        }
    }
    loss / n
}

/// Pairwise softplus ranking loss over a fresh pair sample.
pub fn rank_loss(r: &[f64], z: &[f64], margin: f64, cap: usize, rng: &mut StreamRng) -> f64 {
    let pairs = sample_pairs(z, cap, rng);
    rank_loss_on_pairs(r, z, &pairs, margin, 0.0, None)
}

/// Pairs drawn for one selector batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchPairs {
    pub error: Vec<(usize, usize)>,
    pub cost: Vec<(usize, usize)>,
}

impl BatchPairs {
    pub fn sample(e: &[f64], y_cost: &[f64], cap: usize, rng: &mut StreamRng) -> Self {
        BatchPairs { error: sample_pairs(e, cap, rng), cost: sample_pairs(y_cost, cap, rng) }
    }
}

/// `BCE(σ(r), y_cost) + w·rank(r, E) + c·rank(r, y_cost)` averaged over the
/// batch, with `∂/∂r` written to `grad` when given.
pub fn selector_loss(
    r: &[f64],
    e: &[f64],
    y_cost: &[f64],
    pairs: &BatchPairs,
    cfg: &SelectorConfig,
    grad: Option<&mut [f64]>,
) -> f64 {
    let n = r.len() as f64;
    let mut grad = grad;
    let mut bce = 0.0;
    for (k, (&ri, &yi)) in r.iter().zip(y_cost).enumerate() {
        bce += bce_with_logit(ri, yi);
        if let Some(g) = grad.as_deref_mut() {
            g[k] += (sigmoid(ri) - yi) / n;
        }
    }
    let re = rank_loss_on_pairs(r, e, &pairs.error, cfg.rank_margin, cfg.w, grad.as_deref_mut());
    let rc = rank_loss_on_pairs(r, y_cost, &pairs.cost, cfg.rank_margin, cfg.c, grad.as_deref_mut());
    bce / n + cfg.w * re + cfg.c * rc
}

/// Training example for the selector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorSample {
    pub phi: [f64; PHI_DIM],
    pub error: bool,
    pub ambiguous: bool,
    pub y_cost: f64,
}

impl SelectorSample {
    pub fn new(phi: [f64; PHI_DIM], error: bool, ambiguous: bool, gamma: f64) -> Self {
        SelectorSample { phi, error, ambiguous, y_cost: accept_cost(error, ambiguous, gamma) }
    }
}

/// Two-layer perceptron `φ → tanh(24) → dropout → 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorNet {
    pub l1: Linear,
    pub l2: Linear,
}

impl SelectorNet {
    pub fn new(ps: &mut ParamSet, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::Init, 1);
        Ok(SelectorNet { l1: Linear::new(ps, "sel1", PHI_DIM, hidden, &mut rng)?, l2: Linear::new(ps, "sel2", hidden, 1, &mut rng)? })
    }

    /// Raw logits for standardized inputs; `mask` applies dropout to the
    /// hidden layer.
    fn forward(&self, values: &[Tensor], x: &[f64], n: usize, mask: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut hidden = self.l1.forward_values(values, x, n)?;
        tanh_inplace(&mut hidden);
        let dropped = match mask {
            Some(m) => hidden.iter().zip(m).map(|(h, m)| h * m).collect(),
            None => hidden.clone(),
        };
        let r = self.l2.forward_values(values, &dropped, n)?;
        Ok((r, hidden, dropped))
    }

    pub fn logits(&self, values: &[Tensor], x: &[f64], n: usize) -> Result<Vec<f64>> {
        Ok(self.forward(values, x, n, None)?.0)
    }

    /// Loss on a batch with gradients accumulated into `params`.
    pub fn loss_and_grad(
        &self,
        params: &mut ParamSet,
        x: &[f64],
        e: &[f64],
        y_cost: &[f64],
        pairs: &BatchPairs,
        mask: Option<&[f64]>,
        cfg: &SelectorConfig,
    ) -> Result<f64> {
        let n = e.len();
        let (r, hidden, dropped) = self.forward(params.values(), x, n, mask)?;
        let mut dr = vec![0.0; n];
        let loss = selector_loss(&r, e, y_cost, pairs, cfg, Some(&mut dr));
        let (values, grads) = params.split_mut();
        let mut dh = self.l2.backward(values, grads, &dropped, &dr, n, true)?.unwrap_or_default();
        for (k, g) in dh.iter_mut().enumerate() {
            let m = mask.map_or(1.0, |m| m[k]);
            *g *= m * (1.0 - hidden[k] * hidden[k]);
        }
        self.l1.backward(values, grads, x, &dh, n, false)?;
        Ok(loss)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; PHI_DIM],
    pub std: [f64; PHI_DIM],
}

impl Standardizer {
    pub fn fit(rows: &[[f64; PHI_DIM]]) -> Self {
        let n = rows.len().max(1) as f64;
        let mean: [f64; PHI_DIM] = std::array::from_fn(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n);
        let std = std::array::from_fn(|j| {
            (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt().max(crate::data::STD_FLOOR)
        });
        Standardizer { mean, std }
    }

    pub fn apply(&self, rows: &[[f64; PHI_DIM]]) -> Vec<f64> {
        rows.iter()
            .flat_map(|r| (0..PHI_DIM).map(move |j| (r[j] - self.mean[j]) / self.std[j]))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Selector {
    pub config: SelectorConfig,
    pub net: SelectorNet,
    pub params: ParamSet,
    pub standardizer: Standardizer,
}

impl Selector {
    pub fn logits(&self, phi: &[[f64; PHI_DIM]]) -> Result<Vec<f64>> {
        if phi.is_empty() {
            return Ok(Vec::new());
        }
        self.net.logits(self.params.values(), &self.standardizer.apply(phi), phi.len())
    }

    pub fn accept_scores(&self, phi: &[[f64; PHI_DIM]]) -> Result<Vec<f64>> {
        Ok(self.logits(phi)?.into_iter().map(accept_score).collect())
    }
}

fn columns(samples: &[&SelectorSample]) -> (Vec<f64>, Vec<f64>) {
    (
        samples.iter().map(|s| if s.error { 1.0 } else { 0.0 }).collect(),
        samples.iter().map(|s| s.y_cost).collect(),
    )
}

/// Trains on samples from a split disjoint from backbone training. A
/// random `holdout` share drives early stopping.
pub fn train_selector(samples: &[SelectorSample], cfg: &SelectorConfig) -> Result<(Selector, TrainLog)> {
    cfg.validate()?;
    let first = samples.first().map(|s| s.y_cost);
    if first.is_none() || samples.iter().all(|s| Some(s.y_cost) == first) {
        return Err(ChaseError::Config("selector samples have a single cost value; nothing to rank".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut stream_rng(cfg.seed, Stream::Split, 1));
    let n_hold = ((samples.len() as f64 * cfg.holdout).round() as usize).clamp(1, samples.len() - 1);
    let (hold_idx, fit_idx) = order.split_at(n_hold);
    let fit_set: Vec<&SelectorSample> = fit_idx.iter().map(|&i| &samples[i]).collect();
    let hold_set: Vec<&SelectorSample> = hold_idx.iter().map(|&i| &samples[i]).collect();

    let fit_phi: Vec<[f64; PHI_DIM]> = fit_set.iter().map(|s| s.phi).collect();
    let standardizer = Standardizer::fit(&fit_phi);
    let fit_x = standardizer.apply(&fit_phi);
    let (fit_e, fit_c) = columns(&fit_set);
    let hold_x = standardizer.apply(&hold_set.iter().map(|s| s.phi).collect::<Vec<_>>());
    let (hold_e, hold_c) = columns(&hold_set);
    let hold_pairs = BatchPairs::sample(&hold_e, &hold_c, cfg.pair_cap, &mut stream_rng(cfg.seed, Stream::PairSampling, HOLDOUT_PAIR_KEY));

    let mut params = ParamSet::new();
    let net = SelectorNet::new(&mut params, cfg.hidden, cfg.seed)?;
    let schedule = Schedule {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        patience: cfg.patience,
        adam: AdamConfig { lr: cfg.lr, ..AdamConfig::default() },
        seed: cfg.seed,
    };
    let mut pair_rng = stream_rng(cfg.seed, Stream::PairSampling, 0);
    let log = fit(
        &mut params,
        fit_set.len(),
        &schedule,
        |ps, idx, drop_rng| {
            let x: Vec<f64> = idx.iter().flat_map(|&i| fit_x[i * PHI_DIM..(i + 1) * PHI_DIM].iter().copied()).collect();
            let e: Vec<f64> = idx.iter().map(|&i| fit_e[i]).collect();
            let c: Vec<f64> = idx.iter().map(|&i| fit_c[i]).collect();
            let pairs = BatchPairs::sample(&e, &c, cfg.pair_cap, &mut pair_rng);
            let mask = dropout_mask(idx.len() * cfg.hidden, cfg.dropout, drop_rng);
            net.loss_and_grad(ps, &x, &e, &c, &pairs, Some(&mask), cfg)
        },
        |ps| {
            let r = net.logits(ps.values(), &hold_x, hold_e.len())?;
            Ok(selector_loss(&r, &hold_e, &hold_c, &hold_pairs, cfg, None))
        },
    )?;
    Ok((Selector { config: cfg.clone(), net, params, standardizer }, log))
}

/// Largest `τ` such that at least `ceil(coverage·n)` scores are `≥ τ`.
pub fn calibrate_threshold(scores: &[f64], coverage: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(ChaseError::InvalidInput("cannot calibrate a threshold on no scores".into()));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(ChaseError::Config(format!("coverage must lie in (0, 1], got {coverage}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((coverage * sorted.len() as f64 - 1e-9).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[k - 1])
}
