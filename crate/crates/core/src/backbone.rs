//! Dual-hypothesis sequence backbone.
//!
//! A shared GRU reads `x_1..x_{T-1}`. Two Gaussian heads, one per class,
//! predict `x_{t+1}` from `h_t`; a head's time-averaged negative
//! log-likelihood `ℓ` scores how well that class's dynamics explain the
//! sequence. An auxiliary perceptron classifies the mean-pooled states.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{time_major, Example, Frame, Normalizer};
use crate::error::{ChaseError, Result};
use crate::numerics::ops::{gaussian_nll, gaussian_nll_backward, softmax2, tanh_inplace};
use crate::persist;
use crate::numerics::{AdamConfig, Gru, GruStep, Linear, ParamSet, Tensor};
use crate::rng::{stream_rng, Stream};
use crate::simulator::{Label, FEATURE_DIM};
use crate::train::{fit, Schedule, TrainLog};

const INFERENCE_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub hidden: usize,
    pub aux_hidden: usize,
    pub margin: f64,
    pub lambda_m: f64,
    pub lambda_c: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            hidden: 64,
            aux_hidden: 32,
            margin: 1.0,
            lambda_m: 1.0,
            lambda_c: 1.5,
            epochs: 30,
            batch_size: 64,
            patience: 6,
            lr: 1e-3,
            seed: 42,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(ChaseError::Config(format!("margin must be > 0, got {}", self.margin)));
        }
        if !(self.lambda_m >= 0.0 && self.lambda_c >= 0.0) {
            return Err(ChaseError::Config("loss weights must be >= 0".into()));
        }
        if self.hidden == 0 || self.aux_hidden == 0 || self.batch_size == 0 {
            return Err(ChaseError::Config("layer widths and batch size must be > 0".into()));
        }
        if !(self.lr > 0.0) {
            return Err(ChaseError::Config("learning rate must be > 0".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            seed: self.seed,
        }
    }
}

/// Which Gaussian head scores each hypothesis. The single-head modes score
/// both classes with the same head, which removes the competition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    #[default]
    Dual,
    ConnectedOnly,
    NotConnectedOnly,
}

impl HeadMode {
    /// Physical head used for `[ℓ_c, ℓ_n]`.
    fn heads(self) -> [usize; 2] {
        match self {
            HeadMode::Dual => [0, 1],
            HeadMode::ConnectedOnly => [0, 0],
            HeadMode::NotConnectedOnly => [1, 1],
        }
    }
}

/// Per-sequence backbone output; probability vectors are indexed by
/// [`Label::index`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneOutput {
    pub l_c: f64,
    pub l_n: f64,
    pub pi_hyp: [f64; 2],
    pub pi_aux: [f64; 2],
}

impl BackboneOutput {
    pub fn new(l_c: f64, l_n: f64, pi_aux: [f64; 2]) -> Self {
        BackboneOutput { l_c, l_n, pi_hyp: softmax2(-l_c, -l_n), pi_aux }
    }

    pub fn gap(&self) -> f64 {
        self.l_n - self.l_c
    }

    pub fn score(&self, label: Label) -> f64 {
        match label {
            Label::Connected => self.l_c,
            Label::NotConnected => self.l_n,
        }
    }

    /// `argmin(ℓ_c, ℓ_n)`; a tie commits to connected.
    pub fn hypothesis_prediction(&self) -> Label {
        if self.l_c <= self.l_n {
            Label::Connected
        } else {
            Label::NotConnected
        }
    }
}

/// Per-sequence objective
/// `ℓ^y + λ_m·max(0, m − (ℓ^ȳ − ℓ^y)) + λ_c·CE(π_aux, y)`.
pub fn backbone_loss(out: &BackboneOutput, y: Label, cfg: &BackboneConfig) -> f64 {
    let ly = out.score(y);
    let lo = out.score(y.other());
    let hinge = (cfg.margin - (lo - ly)).max(0.0);
    let ce = -out.pi_aux[y.index()].max(f64::MIN_POSITIVE).ln();
    ly + cfg.lambda_m * hinge + cfg.lambda_c * ce
}

/// Layer handles; the weights live in a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneNet {
    pub gru: Gru,
    pub heads: [Linear; 2],
    pub aux1: Linear,
    pub aux2: Linear,
}

struct Cache {
    batch: usize,
    steps_len: usize,
    xs: Vec<Vec<f64>>,
    steps: Vec<GruStep>,
    /// `(T-1)·B x H`, row `t·B + b`.
    hstack: Vec<f64>,
    head_out: [Vec<f64>; 2],
    pooled: Vec<f64>,
    aux_hidden: Vec<f64>,
}

impl BackboneNet {
    pub fn new(ps: &mut ParamSet, cfg: &BackboneConfig, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::Init, 0);
        let h = cfg.hidden;
        let gru = Gru::new(ps, "gru", FEATURE_DIM, h, &mut rng)?;
        let hc = Linear::new(ps, "head_c", h, 2 * FEATURE_DIM, &mut rng)?;
        let hn = Linear::new(ps, "head_n", h, 2 * FEATURE_DIM, &mut rng)?;
        let aux1 = Linear::new(ps, "aux1", h, cfg.aux_hidden, &mut rng)?;
        let aux2 = Linear::new(ps, "aux2", cfg.aux_hidden, 2, &mut rng)?;
        Ok(BackboneNet { gru, heads: [hc, hn], aux1, aux2 })
    }

    fn forward(&self, values: &[Tensor], batch: &[&[Frame]], mode: HeadMode) -> Result<(Vec<BackboneOutput>, Cache)> {
        let b = batch.len();
        let t_len = batch.first().map_or(0, |s| s.len());
        if b == 0 {
            return Err(ChaseError::InvalidInput("empty batch".into()));
        }
        if t_len < 2 {
            return Err(ChaseError::InvalidInput(format!("sequences need at least 2 frames, got {t_len}")));
        }
        if batch.iter().any(|s| s.len() != t_len) {
            return Err(ChaseError::InvalidInput("sequences in a batch must share a length".into()));
        }
        let s = t_len - 1;
        let hd = self.gru.hidden;
        let xs = time_major(batch, s)?;
        let steps = self.gru.forward_sequence(values, &xs, b)?;
        let mut hstack = Vec::with_capacity(s * b * hd);
        for st in &steps {
            hstack.extend_from_slice(&st.h);
        }
        let head_out = [
            self.heads[0].forward_values(values, &hstack, s * b)?,
            self.heads[1].forward_values(values, &hstack, s * b)?,
        ];
        let d = FEATURE_DIM;
        let mut nll = [vec![0.0; b], vec![0.0; b]];
        for (k, out) in head_out.iter().enumerate() {
            if mode.heads()[0] != k && mode.heads()[1] != k {
                continue;
            }
            for t in 0..s {
                for bi in 0..b {
                    let row = &out[(t * b + bi) * 2 * d..(t * b + bi + 1) * 2 * d];
                    nll[k][bi] += gaussian_nll(&batch[bi][t + 1], &row[..d], &row[d..])?;
                }
            }
            for v in &mut nll[k] {
                *v /= s as f64;
            }
        }

        let mut pooled = vec![0.0; b * hd];
        for st in &steps {
            for (p, h) in pooled.iter_mut().zip(&st.h) {
                *p += h;
            }
        }
        for p in &mut pooled {
            *p /= s as f64;
        }
        let mut aux_hidden = self.aux1.forward_values(values, &pooled, b)?;
        tanh_inplace(&mut aux_hidden);
        let logits = self.aux2.forward_values(values, &aux_hidden, b)?;

        let [hc, hn] = mode.heads();
        let outputs = (0..b)
            .map(|bi| BackboneOutput::new(nll[hc][bi], nll[hn][bi], softmax2(logits[2 * bi], logits[2 * bi + 1])))
            .collect();
        let cache = Cache { batch: b, steps_len: s, xs, steps, hstack, head_out, pooled, aux_hidden };
        Ok((outputs, cache))
    }

    /// Outputs for any number of sequences.
    pub fn predict(&self, values: &[Tensor], seqs: &[&[Frame]], mode: HeadMode) -> Result<Vec<BackboneOutput>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(INFERENCE_CHUNK) {
            out.extend(self.forward(values, chunk, mode)?.0);
        }
        Ok(out)
    }

    /// Mean loss over `examples` without touching gradients.
    pub fn mean_loss(&self, values: &[Tensor], examples: &[&Example], cfg: &BackboneConfig) -> Result<f64> {
        let mut total = 0.0;
        for chunk in examples.chunks(INFERENCE_CHUNK) {
            let seqs: Vec<&[Frame]> = chunk.iter().map(|e| e.features.as_slice()).collect();
            let (outs, _) = self.forward(values, &seqs, HeadMode::Dual)?;
            total += outs.iter().zip(chunk).map(|(o, e)| backbone_loss(o, e.label, cfg)).sum::<f64>();
        }
        Ok(total / examples.len() as f64)
    }

    /// Mean batch loss; gradients are accumulated into `params`.
    pub fn loss_and_grad(&self, params: &mut ParamSet, batch: &[&Example], cfg: &BackboneConfig) -> Result<f64> {
        let seqs: Vec<&[Frame]> = batch.iter().map(|e| e.features.as_slice()).collect();
        let (outs, cache) = self.forward(params.values(), &seqs, HeadMode::Dual)?;
        let b = cache.batch;
        let s = cache.steps_len;
        let hd = self.gru.hidden;
        let d = FEATURE_DIM;
        let inv_b = 1.0 / b as f64;

        let mut loss = 0.0;
        // dL/dℓ per physical head and sequence.
        let mut coef = [vec![0.0; b], vec![0.0; b]];
        let mut dlogits = vec![0.0; 2 * b];
        for (bi, (o, e)) in outs.iter().zip(batch).enumerate() {
            loss += backbone_loss(o, e.label, cfg);
            let y = e.label.index();
            let active = cfg.margin - (o.score(e.label.other()) - o.score(e.label)) > 0.0;
            let hinge = if active { cfg.lambda_m } else { 0.0 };
            coef[y][bi] += inv_b * (1.0 + hinge);
            coef[1 - y][bi] -= inv_b * hinge;
            for k in 0..2 {
                let target = if k == y { 1.0 } else { 0.0 };
                dlogits[2 * bi + k] = cfg.lambda_c * inv_b * (o.pi_aux[k] - target);
            }
        }

        let (values, grads) = params.split_mut();
        let mut dh_stack = vec![0.0; s * b * hd];
        for k in 0..2 {
            let out = &cache.head_out[k];
            let mut dout = vec![0.0; s * b * 2 * d];
            for t in 0..s {
                for bi in 0..b {
                    let r = t * b + bi;
                    let row = &out[r * 2 * d..(r + 1) * 2 * d];
                    let (dmu, dlv) = dout[r * 2 * d..(r + 1) * 2 * d].split_at_mut(d);
                    gaussian_nll_backward(&seqs[bi][t + 1], &row[..d], &row[d..], coef[k][bi] / s as f64, dmu, dlv)?;
                }
            }
            let dh = self.heads[k].backward(values, grads, &cache.hstack, &dout, s * b, true)?.unwrap_or_default();
            for (acc, v) in dh_stack.iter_mut().zip(&dh) {
                *acc += v;
            }
        }

        let da1 = self.aux2.backward(values, grads, &cache.aux_hidden, &dlogits, b, true)?.unwrap_or_default();
        let dz1: Vec<f64> = da1.iter().zip(&cache.aux_hidden).map(|(g, a)| g * (1.0 - a * a)).collect();
        let dpooled = self.aux1.backward(values, grads, &cache.pooled, &dz1, b, true)?.unwrap_or_default();
        for t in 0..s {
            for (acc, v) in dh_stack[t * b * hd..(t + 1) * b * hd].iter_mut().zip(&dpooled) {
                *acc += v / s as f64;
            }
        }

        let zero = vec![0.0; b * hd];
        let mut carry = vec![0.0; b * hd];
        for t in (0..s).rev() {
            let dh: Vec<f64> = dh_stack[t * b * hd..(t + 1) * b * hd].iter().zip(&carry).map(|(a, c)| a + c).collect();
            let h_prev = if t == 0 { &zero } else { &cache.steps[t - 1].h };
            carry = self.gru.cell_backward(values, grads, &cache.xs[t], h_prev, &cache.steps[t], &dh, None)?;
        }
        Ok(loss * inv_b)
    }
}

/// A trained (or freshly initialized) backbone with everything needed to
/// score raw sequences.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub net: BackboneNet,
    pub params: ParamSet,
    pub normalizer: Option<Normalizer>,
}

impl Backbone {
    pub fn new(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let net = BackboneNet::new(&mut params, &config, config.seed)?;
        Ok(Backbone { config, net, params, normalizer: None })
    }

    /// Scores already-normalized sequences.
    pub fn predict(&self, seqs: &[&[Frame]], mode: HeadMode) -> Result<Vec<BackboneOutput>> {
        self.net.predict(self.params.values(), seqs, mode)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save(path, "backbone", self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut b: Backbone = persist::load(path, "backbone")?;
        b.params.restore_grads();
        Ok(b)
    }
}

/// Trains on normalized examples, early-stopping on mean validation loss.
pub fn train_backbone(train: &[Example], val: &[Example], config: &BackboneConfig) -> Result<(Backbone, TrainLog)> {
    if val.is_empty() {
        return Err(ChaseError::Config("backbone training needs a validation set".into()));
    }
    let mut model = Backbone::new(config.clone())?;
    let net = model.net;
    let val_refs: Vec<&Example> = val.iter().collect();
    let log = fit(
        &mut model.params,
        train.len(),
        &config.schedule(),
        |ps, idx, _| {
            let batch: Vec<&Example> = idx.iter().map(|&i| &train[i]).collect();
            net.loss_and_grad(ps, &batch, config)
        },
        |ps| net.mean_loss(ps.values(), &val_refs, config),
    )?;
    tracing::info!(seed = config.seed, best_epoch = log.best_epoch, val = log.best_val_loss, "backbone trained");
    Ok((model, log))
}
