use rand::seq::index::sample;

use super::ParamSet;
use crate::error::{ChaseError, Result};
use crate::rng::{stream_rng, Stream};

/// Settings for [`grad_check`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tol: f64,
    /// Coordinates to probe; every coordinate is checked when the set is smaller.
    pub max_coords: usize,
    /// Denominator floor for the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-5, tol: 1e-4, max_coords: 256, floor: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

/// Compares the analytic gradients currently stored in `params` against
/// central differences of `loss_fn`.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`. Every parameter
/// tensor contributes at least `min(len, 4)` coordinates.
pub fn grad_check<F>(params: &mut ParamSet, mut loss_fn: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let total = params.num_scalars();
    let mut rng = stream_rng(opts.seed, Stream::Split, 0x6c);
    let mut coords: Vec<(usize, usize)> = Vec::new();
    if total <= opts.max_coords {
        for (pi, t) in params.values().iter().enumerate() {
            coords.extend((0..t.len()).map(|i| (pi, i)));
        }
    } else {
        for (pi, t) in params.values().iter().enumerate() {
            let share = ((t.len() as f64 / total as f64) * opts.max_coords as f64).ceil() as usize;
            let k = share.max(4).min(t.len());
            coords.extend(sample(&mut rng, t.len(), k).into_iter().map(|i| (pi, i)));
        }
    }
    let analytic: Vec<f64> = coords.iter().map(|&(p, i)| params.grads()[p].data()[i]).collect();

    let mut worst = None;
    let mut max_rel = 0.0f64;
    for (&(p, i), &a) in coords.iter().zip(&analytic) {
        let orig = params.values()[p].data()[i];
        let mut eval = |v: f64, ps: &mut ParamSet| -> Result<f64> {
            ps.values_and_grads_mut().0[p].data_mut()[i] = v;
            let l = loss_fn(ps)?;
            if !l.is_finite() {
                return Err(ChaseError::Numerical(format!("non-finite loss {l} while probing {}", ps.names()[p])));
            }
            Ok(l)
        };
        let plus = eval(orig + opts.eps, params);
        let minus = eval(orig - opts.eps, params);
        params.values_and_grads_mut().0[p].data_mut()[i] = orig;
        let numeric = (plus? - minus?) / (2.0 * opts.eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        if rel > max_rel || worst.is_none() {
            max_rel = max_rel.max(rel);
            worst = Some((params.names()[p].clone(), i));
        }
    }
    Ok(GradCheckReport { max_rel_error: max_rel, checked: coords.len(), worst, passed: max_rel < opts.tol })
}
