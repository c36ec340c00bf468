use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{sigmoid_inplace, tanh_inplace};
use super::{gemm, MatMut, MatRef, ParamId, ParamSet, Tensor};
use crate::error::{shape_err, Result};

/// Single-layer GRU.
///
/// Gate layout along the `3H` axis is `[z | r | n]`:
///
/// ```text
/// z  = σ(x Wz + h Uz + bz)
/// r  = σ(x Wr + h Ur + br)
/// n  = tanh(x Wn + (r ⊙ h) Un + bn)
/// h' = (1 - z) ⊙ h + z ⊙ n
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Cached intermediates of one batched cell step.
#[derive(Clone, Debug)]
pub struct GruStep {
    pub batch: usize,
    /// `batch x 3H` post-activation gates `[z | r | n]`.
    pub gates: Vec<f64>,
    /// `r ⊙ h_prev`.
    pub rh: Vec<f64>,
    /// New hidden state.
    pub h: Vec<f64>,
}

impl Gru {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let w = ps.add_uniform(&format!("{name}.w"), &[input, 3 * hidden], 1.0 / (input as f64).sqrt(), rng)?;
        let u = ps.add_uniform(&format!("{name}.u"), &[hidden, 3 * hidden], 1.0 / (hidden as f64).sqrt(), rng)?;
        let b = ps.add_uniform(&format!("{name}.b"), &[3 * hidden], 0.0, rng)?;
        Ok(Gru { w, u, b, input, hidden })
    }

    pub fn cell_forward(&self, ps: &ParamSet, x: &[f64], h_prev: &[f64], batch: usize) -> Result<GruStep> {
        self.cell_forward_values(ps.values(), x, h_prev, batch)
    }

    pub(crate) fn cell_forward_values(&self, values: &[Tensor], x: &[f64], h_prev: &[f64], batch: usize) -> Result<GruStep> {
        let h = self.hidden;
        if x.len() != batch * self.input || h_prev.len() != batch * h {
            return shape_err(format!(
                "gru cell expects x {}x{} and h {}x{}, got {} and {} values",
                batch,
                self.input,
                batch,
                h,
                x.len(),
                h_prev.len()
            ));
        }
        let w = values[self.w.0].view();
        let u = values[self.u.0].view();
        let bias = values[self.b.0].data();

        let mut pre = Vec::with_capacity(batch * 3 * h);
        for _ in 0..batch {
            pre.extend_from_slice(bias);
        }
        gemm(1.0, MatRef::new(x, batch, self.input), w, 1.0, MatMut::new(&mut pre, batch, 3 * h));
        gemm(
            1.0,
            MatRef::new(h_prev, batch, h),
            u.col_range(0, 2 * h),
            1.0,
            MatMut::new(&mut pre, batch, 3 * h).col_range(0, 2 * h),
        );
        let mut rh = vec![0.0; batch * h];
        for bi in 0..batch {
            let row = &mut pre[bi * 3 * h..(bi + 1) * 3 * h];
            sigmoid_inplace(&mut row[..2 * h]);
            let hp = &h_prev[bi * h..(bi + 1) * h];
            for j in 0..h {
                rh[bi * h + j] = row[h + j] * hp[j];
            }
        }
        gemm(
            1.0,
            MatRef::new(&rh, batch, h),
            u.col_range(2 * h, h),
            1.0,
            MatMut::new(&mut pre, batch, 3 * h).col_range(2 * h, h),
        );
        let mut out = vec![0.0; batch * h];
        for bi in 0..batch {
            let row = &mut pre[bi * 3 * h..(bi + 1) * 3 * h];
            let hp = &h_prev[bi * h..(bi + 1) * h];
            let o = &mut out[bi * h..(bi + 1) * h];
            tanh_inplace(&mut row[2 * h..]);
            for j in 0..h {
                let (z, n) = (row[j], row[2 * h + j]);
                o[j] = (1.0 - z) * hp[j] + z * n;
            }
        }
        Ok(GruStep { batch, gates: pre, rh, h: out })
    }

    /// Backpropagates `dh` through one step. Parameter gradients are
    /// accumulated; the gradient w.r.t. `h_prev` is returned and the input
    /// gradient is written to `dx` when provided.
    pub fn cell_backward(
        &self,
        values: &[Tensor],
        grads: &mut [Tensor],
        x: &[f64],
        h_prev: &[f64],
        step: &GruStep,
        dh: &[f64],
        dx: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        let h = self.hidden;
        let batch = step.batch;
        if dh.len() != batch * h || h_prev.len() != batch * h || x.len() != batch * self.input {
            return shape_err("gru backward shape mismatch");
        }
        let mut dpre = vec![0.0; batch * 3 * h];
        let mut dh_prev = vec![0.0; batch * h];
        for bi in 0..batch {
            let g = &step.gates[bi * 3 * h..(bi + 1) * 3 * h];
            let hp = &h_prev[bi * h..(bi + 1) * h];
            let d = &dh[bi * h..(bi + 1) * h];
            let dp = &mut dpre[bi * 3 * h..(bi + 1) * 3 * h];
            let dhp = &mut dh_prev[bi * h..(bi + 1) * h];
            for j in 0..h {
                let (z, n) = (g[j], g[2 * h + j]);
                dp[j] = d[j] * (n - hp[j]) * z * (1.0 - z);
                dp[2 * h + j] = d[j] * z * (1.0 - n * n);
                dhp[j] = d[j] * (1.0 - z);
            }
        }
        let u = values[self.u.0].view();
        // d(r ⊙ h_prev)
        let mut drh = vec![0.0; batch * h];
        gemm(
            1.0,
            MatRef::new(&dpre, batch, 3 * h).col_range(2 * h, h),
            u.col_range(2 * h, h).t(),
            0.0,
            MatMut::new(&mut drh, batch, h),
        );
        for bi in 0..batch {
            let g = &step.gates[bi * 3 * h..(bi + 1) * 3 * h];
            let hp = &h_prev[bi * h..(bi + 1) * h];
            for j in 0..h {
                let r = g[h + j];
                let v = drh[bi * h + j];
                dpre[bi * 3 * h + h + j] = v * hp[j] * r * (1.0 - r);
                dh_prev[bi * h + j] += v * r;
            }
        }
        gemm(
            1.0,
            MatRef::new(&dpre, batch, 3 * h).col_range(0, 2 * h),
            u.col_range(0, 2 * h).t(),
            1.0,
            MatMut::new(&mut dh_prev, batch, h),
        );

        gemm(
            1.0,
            MatRef::new(x, batch, self.input).t(),
            MatRef::new(&dpre, batch, 3 * h),
            1.0,
            grads[self.w.0].view_mut(),
        );
        gemm(
            1.0,
            MatRef::new(h_prev, batch, h).t(),
            MatRef::new(&dpre, batch, 3 * h).col_range(0, 2 * h),
            1.0,
            grads[self.u.0].view_mut().col_range(0, 2 * h),
        );
        gemm(
            1.0,
            MatRef::new(&step.rh, batch, h).t(),
            MatRef::new(&dpre, batch, 3 * h).col_range(2 * h, h),
            1.0,
            grads[self.u.0].view_mut().col_range(2 * h, h),
        );
        let db = grads[self.b.0].data_mut();
        for row in dpre.chunks_exact(3 * h) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        if let Some(dx) = dx {
            if dx.len() != batch * self.input {
                return shape_err("gru dx buffer has wrong length");
            }
            gemm(
                1.0,
                MatRef::new(&dpre, batch, 3 * h),
                values[self.w.0].view().t(),
                0.0,
                MatMut::new(dx, batch, self.input),
            );
        }
        Ok(dh_prev)
    }

    /// Runs the cell over time-major inputs (`xs[t]` is `batch x input`)
    /// from a zero initial state.
    pub fn forward_sequence(&self, values: &[Tensor], xs: &[Vec<f64>], batch: usize) -> Result<Vec<GruStep>> {
        let mut steps: Vec<GruStep> = Vec::with_capacity(xs.len());
        let zero = vec![0.0; batch * self.hidden];
        for x in xs {
            let prev = steps.last().map_or(zero.as_slice(), |s| s.h.as_slice());
            let step = self.cell_forward_values(values, x, prev, batch)?;
            steps.push(step);
        }
        Ok(steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn zero_gru() -> (ParamSet, Gru) {
        let mut ps = ParamSet::new();
        let mut rng = stream_rng(0, Stream::Init, 0);
        let g = Gru::new(&mut ps, "gru", 6, 64, &mut rng).unwrap();
        for id in [g.w, g.u, g.b] {
            ps.value_mut(id).fill(0.0);
        }
        (ps, g)
    }

    #[test]
    fn zero_weights_zero_state_gives_zero() {
        let (ps, g) = zero_gru();
        let x = [0.3, -1.0, 2.0, 0.5, 0.1, 9.0];
        let step = g.cell_forward(&ps, &x, &[0.0; 64], 1).unwrap();
        assert!(step.h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_halve_previous_state() {
        let (ps, g) = zero_gru();
        let v: Vec<f64> = (0..64).map(|i| i as f64 * 0.1 - 3.0).collect();
        let step = g.cell_forward(&ps, &[1.0; 6], &v, 1).unwrap();
        for (a, b) in step.h.iter().zip(&v) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let (ps, g) = zero_gru();
        assert!(g.cell_forward(&ps, &[0.0; 5], &[0.0; 64], 1).is_err());
        assert!(g.cell_forward(&ps, &[0.0; 6], &[0.0; 63], 1).is_err());
    }
}
