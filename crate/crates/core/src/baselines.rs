//! Single-branch comparison methods on the same GRU encoder: maximum
//! softmax probability, MC Dropout, and deep ensembles.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{time_major, Example, Frame};
use crate::ensemble::argmax2;
use crate::error::{ChaseError, Result};
use crate::numerics::ops::{dropout_mask, softmax2, tanh_inplace};
use crate::numerics::{AdamConfig, Gru, GruStep, Linear, ParamSet, Tensor};
use crate::persist;
use crate::rng::{stream_rng, Stream, StreamRng};
use crate::simulator::{Label, FEATURE_DIM};
use crate::train::{fit, Schedule, TrainLog};

const INFERENCE_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub head_hidden: usize,
    /// Applied to the pooled encoding and to the head input.
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 64,
            head_hidden: 32,
            dropout: 0.2,
            epochs: 30,
            batch_size: 64,
            patience: 6,
            lr: 1e-3,
            seed: 42,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ChaseError::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.hidden == 0 || self.head_hidden == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(ChaseError::Config("classifier widths, batch size and learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// A method's committed prediction and accept score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub prediction: Label,
    pub score: f64,
}

/// Argmax and max probability.
pub fn msp_score(p: [f64; 2]) -> Scored {
    let prediction = argmax2(p);
    Scored { prediction, score: p[prediction.index()] }
}

/// Elementwise mean of probability vectors, summed in a fixed order.
pub fn mean_probs(ps: &[[f64; 2]]) -> Result<[f64; 2]> {
    if ps.is_empty() {
        return Err(ChaseError::Config("cannot average zero probability vectors".into()));
    }
    let mut c: Vec<f64> = ps.iter().map(|p| p[0]).collect();
    c.sort_by(f64::total_cmp);
    let m = c.iter().sum::<f64>() / ps.len() as f64;
    Ok([m, 1.0 - m])
}

/// GRU over all frames, mean pooling, and a two-layer head.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierNet {
    pub gru: Gru,
    pub l1: Linear,
    pub l2: Linear,
}

struct Encoded {
    batch: usize,
    xs: Vec<Vec<f64>>,
    steps: Vec<GruStep>,
    pooled: Vec<f64>,
}

impl ClassifierNet {
    pub fn new(ps: &mut ParamSet, cfg: &ClassifierConfig, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::Init, 2);
        Ok(ClassifierNet {
            gru: Gru::new(ps, "gru", FEATURE_DIM, cfg.hidden, &mut rng)?,
            l1: Linear::new(ps, "cls1", cfg.hidden, cfg.head_hidden, &mut rng)?,
            l2: Linear::new(ps, "cls2", cfg.head_hidden, 2, &mut rng)?,
        })
    }

    fn encode(&self, values: &[Tensor], batch: &[&[Frame]]) -> Result<Encoded> {
        let b = batch.len();
        let t_len = batch.first().map_or(0, |s| s.len());
        if b == 0 || t_len == 0 || batch.iter().any(|s| s.len() != t_len) {
            return Err(ChaseError::InvalidInput("classifier batch must be nonempty with equal lengths".into()));
        }
        let xs = time_major(batch, t_len)?;
        let steps = self.gru.forward_sequence(values, &xs, b)?;
        let mut pooled = vec![0.0; b * self.gru.hidden];
        for st in &steps {
            for (p, h) in pooled.iter_mut().zip(&st.h) {
                *p += h;
            }
        }
        for p in &mut pooled {
            *p /= t_len as f64;
        }
        Ok(Encoded { batch: b, xs, steps, pooled })
    }

    /// Head forward; returns `(dropped pooled, hidden, dropped hidden, logits)`.
    fn head(
        &self,
        values: &[Tensor],
        pooled: &[f64],
        b: usize,
        masks: Option<(&[f64], &[f64])>,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let apply = |v: &[f64], m: Option<&[f64]>| -> Vec<f64> {
            match m {
                Some(m) => v.iter().zip(m).map(|(a, b)| a * b).collect(),
                None => v.to_vec(),
            }
        };
        let p = apply(pooled, masks.map(|m| m.0));
        let mut hidden = self.l1.forward_values(values, &p, b)?;
        tanh_inplace(&mut hidden);
        let hd = apply(&hidden, masks.map(|m| m.1));
        let logits = self.l2.forward_values(values, &hd, b)?;
        Ok((p, hidden, hd, logits))
    }

    fn probs(logits: &[f64]) -> Vec<[f64; 2]> {
        logits.chunks_exact(2).map(|l| softmax2(l[0], l[1])).collect()
    }

    /// Deterministic softmax outputs.
    pub fn predict(&self, values: &[Tensor], seqs: &[&[Frame]]) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(INFERENCE_CHUNK) {
            let enc = self.encode(values, chunk)?;
            out.extend(Self::probs(&self.head(values, &enc.pooled, enc.batch, None)?.3));
        }
        Ok(out)
    }

    /// Mean softmax over `passes` stochastic forward passes. Dropout sits
    /// after the recurrent encoder, so the encoding is computed once.
    pub fn predict_mc(&self, values: &[Tensor], seqs: &[&[Frame]], rate: f64, passes: usize, rng: &mut StreamRng) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(seqs.len());
        let (hd, hh) = (self.gru.hidden, self.l1.out_dim);
        for chunk in seqs.chunks(INFERENCE_CHUNK) {
            let enc = self.encode(values, chunk)?;
            let b = enc.batch;
            let mut per_pass = Vec::with_capacity(passes);
            for _ in 0..passes {
                let m1 = dropout_mask(b * hd, rate, rng);
                let m2 = dropout_mask(b * hh, rate, rng);
                per_pass.push(Self::probs(&self.head(values, &enc.pooled, b, Some((&m1, &m2)))?.3));
            }
            for i in 0..b {
                let ps: Vec<[f64; 2]> = per_pass.iter().map(|p| p[i]).collect();
                out.push(mean_probs(&ps)?);
            }
        }
        Ok(out)
    }

    pub fn mean_loss(&self, values: &[Tensor], examples: &[&Example]) -> Result<f64> {
        let seqs: Vec<&[Frame]> = examples.iter().map(|e| e.features.as_slice()).collect();
        let probs = self.predict(values, &seqs)?;
        let total: f64 = probs.iter().zip(examples).map(|(p, e)| -p[e.label.index()].max(f64::MIN_POSITIVE).ln()).sum();
        Ok(total / examples.len() as f64)
    }

    /// Mean cross-entropy of a batch with gradients accumulated into
    /// `params`; `rate > 0` draws dropout masks from `rng`.
    pub fn loss_and_grad(&self, params: &mut ParamSet, batch: &[&Example], rate: f64, rng: Option<&mut StreamRng>) -> Result<f64> {
        let seqs: Vec<&[Frame]> = batch.iter().map(|e| e.features.as_slice()).collect();
        let enc = self.encode(params.values(), &seqs)?;
        let b = enc.batch;
        let (hd, hh) = (self.gru.hidden, self.l1.out_dim);
        let masks = match rng {
            Some(rng) if rate > 0.0 => Some((dropout_mask(b * hd, rate, rng), dropout_mask(b * hh, rate, rng))),
            _ => None,
        };
        let mrefs = masks.as_ref().map(|(a, c)| (a.as_slice(), c.as_slice()));
        let (p_in, hidden, h_in, logits) = self.head(params.values(), &enc.pooled, b, mrefs)?;
        let probs = Self::probs(&logits);
        let inv_b = 1.0 / b as f64;
        let mut loss = 0.0;
        let mut dlogits = vec![0.0; 2 * b];
        for (i, (p, e)) in probs.iter().zip(batch).enumerate() {
            let y = e.label.index();
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            for k in 0..2 {
                dlogits[2 * i + k] = inv_b * (p[k] - if k == y { 1.0 } else { 0.0 });
            }
        }
        let (values, grads) = params.split_mut();
        let mut dh = self.l2.backward(values, grads, &h_in, &dlogits, b, true)?.unwrap_or_default();
        for (k, g) in dh.iter_mut().enumerate() {
            let m = mrefs.map_or(1.0, |m| m.1[k]);
            *g *= m * (1.0 - hidden[k] * hidden[k]);
        }
        let mut dpool = self.l1.backward(values, grads, &p_in, &dh, b, true)?.unwrap_or_default();
        let t_len = enc.steps.len();
        for (k, g) in dpool.iter_mut().enumerate() {
            *g *= mrefs.map_or(1.0, |m| m.0[k]) / t_len as f64;
        }
        let zero = vec![0.0; b * hd];
        let mut carry = vec![0.0; b * hd];
        for t in (0..t_len).rev() {
            let dh: Vec<f64> = dpool.iter().zip(&carry).map(|(a, c)| a + c).collect();
            let h_prev = if t == 0 { &zero } else { &enc.steps[t - 1].h };
            carry = self.gru.cell_backward(values, grads, &enc.xs[t], h_prev, &enc.steps[t], &dh, None)?;
        }
        Ok(loss * inv_b)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub net: ClassifierNet,
    pub params: ParamSet,
}

impl Classifier {
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let net = ClassifierNet::new(&mut params, &config, config.seed)?;
        Ok(Classifier { config, net, params })
    }

    pub fn predict(&self, seqs: &[&[Frame]]) -> Result<Vec<[f64; 2]>> {
        self.net.predict(self.params.values(), seqs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save(path, "classifier", self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c: Classifier = persist::load(path, "classifier")?;
        c.params.restore_grads();
        Ok(c)
    }
}

pub fn train_classifier(train: &[Example], val: &[Example], config: &ClassifierConfig) -> Result<(Classifier, TrainLog)> {
    if val.is_empty() {
        return Err(ChaseError::Config("classifier training needs a validation set".into()));
    }
    let mut model = Classifier::new(config.clone())?;
    let net = model.net;
    let val_refs: Vec<&Example> = val.iter().collect();
    let schedule = Schedule {
        epochs: config.epochs,
        batch_size: config.batch_size,
        patience: config.patience,
        adam: AdamConfig { lr: config.lr, ..AdamConfig::default() },
        seed: config.seed,
    };
    let log = fit(
        &mut model.params,
        train.len(),
        &schedule,
        |ps, idx, rng| {
            let batch: Vec<&Example> = idx.iter().map(|&i| &train[i]).collect();
            net.loss_and_grad(ps, &batch, config.dropout, Some(rng))
        },
        |ps| net.mean_loss(ps.values(), &val_refs),
    )?;
    tracing::info!(seed = config.seed, best_epoch = log.best_epoch, val = log.best_val_loss, "classifier trained");
    Ok((model, log))
}

/// MSP on one classifier.
pub fn msp(model: &Classifier, seqs: &[&[Frame]]) -> Result<Vec<Scored>> {
    Ok(model.predict(seqs)?.into_iter().map(msp_score).collect())
}

/// MC Dropout with the model's dropout rate and a seeded mask stream.
pub fn mc_dropout(model: &Classifier, seqs: &[&[Frame]], passes: usize, seed: u64) -> Result<Vec<Scored>> {
    if passes < 2 {
        return Err(ChaseError::Config(format!("MC Dropout needs at least 2 passes, got {passes}")));
    }
    let mut rng = stream_rng(seed, Stream::Dropout, 1);
    let probs = model.net.predict_mc(model.params.values(), seqs, model.config.dropout, passes, &mut rng)?;
    Ok(probs.into_iter().map(msp_score).collect())
}

/// Mean softmax over ensemble members.
pub fn deep_ensemble(models: &[Classifier], seqs: &[&[Frame]]) -> Result<Vec<Scored>> {
    if models.len() < 2 {
        return Err(ChaseError::Config("a deep ensemble needs at least 2 members".into()));
    }
    let per_model = models.iter().map(|m| m.predict(seqs)).collect::<Result<Vec<_>>>()?;
    (0..seqs.len())
        .map(|i| {
            let ps: Vec<[f64; 2]> = per_model.iter().map(|p| p[i]).collect();
            mean_probs(&ps).map(msp_score)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msp_examples() {
        assert_eq!(msp_score([0.9, 0.1]), Scored { prediction: Label::Connected, score: 0.9 });
        assert_eq!(msp_score([0.5, 0.5]).score, 0.5);
        assert_eq!(msp_score([0.2, 0.8]).prediction, Label::NotConnected);
    }

    #[test]
    fn ensemble_mean_example() {
        let m = mean_probs(&[[0.9, 0.1], [0.7, 0.3], [0.8, 0.2]]).unwrap();
        assert!((m[0] - 0.8).abs() < 1e-15 && (m[1] - 0.2).abs() < 1e-15);
        let s = msp_score(m);
        assert!((s.score - 0.8).abs() < 1e-15);
    }
}
