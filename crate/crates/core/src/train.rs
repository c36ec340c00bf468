//! Mini-batch training loop with early stopping, shared by every model.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ChaseError, Result};
use crate::numerics::{adam_step, AdamConfig, OptimizerState, ParamSet};
use crate::rng::{stream_rng, Stream, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Runs Adam over shuffled mini-batches of `0..n_train` and keeps the
/// parameters with the lowest validation loss.
///
/// `step` must accumulate gradients into the parameter set and return the
/// batch loss; it receives the dropout stream. `val_loss` is evaluated once
/// per epoch. Training stops after `patience` epochs without improvement.
pub fn fit<S, V>(params: &mut ParamSet, n_train: usize, schedule: &Schedule, mut step: S, mut val_loss: V) -> Result<TrainLog>
where
    S: FnMut(&mut ParamSet, &[usize], &mut StreamRng) -> Result<f64>,
    V: FnMut(&ParamSet) -> Result<f64>,
{
    if n_train == 0 || schedule.batch_size == 0 {
        return Err(ChaseError::Config("training needs a nonempty set and batch size > 0".into()));
    }
    let mut opt = OptimizerState::new(params, schedule.adam);
    let mut shuffle = stream_rng(schedule.seed, Stream::Shuffle, 0);
    let mut dropout = stream_rng(schedule.seed, Stream::Dropout, 0);
    let mut order: Vec<usize> = (0..n_train).collect();
    params.zero_grads();

    let mut best = params.clone();
    let mut log = TrainLog { best_val_loss: f64::INFINITY, ..TrainLog::default() };
    let mut since_best = 0;
    for epoch in 0..schedule.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        let mut batches = 0;
        for (bi, idx) in order.chunks(schedule.batch_size).enumerate() {
            let loss = step(params, idx, &mut dropout)?;
            if !loss.is_finite() {
                return Err(ChaseError::Numerical(format!("non-finite training loss at epoch {epoch}, batch {bi}")));
            }
            if !params.grads().iter().all(|g| g.is_finite()) {
                return Err(ChaseError::Numerical(format!("non-finite gradient at epoch {epoch}, batch {bi}")));
            }
            adam_step(params, &mut opt)?;
            total += loss;
            batches += 1;
        }
        let val = val_loss(params)?;
        if !val.is_finite() {
            return Err(ChaseError::Numerical(format!("non-finite validation loss at epoch {epoch}")));
        }
        log.epochs.push(EpochLog { epoch, train_loss: total / batches as f64, val_loss: val });
        tracing::debug!(epoch, train = total / batches as f64, val, "epoch");
        if val < log.best_val_loss {
            log.best_val_loss = val;
            log.best_epoch = epoch;
            best.copy_values_from(params)?;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= schedule.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    params.copy_values_from(&best)?;
    params.zero_grads();
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn bowl() -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap()).unwrap();
        ps
    }

    fn schedule(epochs: usize, patience: usize) -> Schedule {
        Schedule { epochs, batch_size: 4, patience, adam: AdamConfig { lr: 0.05, ..AdamConfig::default() }, seed: 1 }
    }

    fn quad_step(ps: &mut ParamSet, _: &[usize], _: &mut StreamRng) -> Result<f64> {
        let (values, grads) = ps.split_mut();
        let w = values[0].data().to_vec();
        for (g, wi) in grads[0].data_mut().iter_mut().zip(&w) {
            *g += 2.0 * wi;
        }
        Ok(w.iter().map(|v| v * v).sum())
    }

    #[test]
    fn keeps_best_validation_parameters() {
        let mut ps = bowl();
        // Validation prefers w[0] near 0.5, which is passed on the way down.
        let log = fit(&mut ps, 8, &schedule(200, 5), quad_step, |p| Ok((p.values()[0].data()[0] - 0.5).abs())).unwrap();
        assert!(log.stopped_early);
        let w0 = ps.values()[0].data()[0];
        assert!((w0 - 0.5).abs() <= log.best_val_loss + 1e-12);
        assert_eq!(log.epochs[log.best_epoch].val_loss, log.best_val_loss);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut ps = bowl();
        let err = fit(&mut ps, 8, &schedule(3, 3), |_, _, _| Ok(f64::NAN), |_| Ok(0.0)).unwrap_err();
        assert!(matches!(err, ChaseError::Numerical(_)));
    }
}
