use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gemm, MatMut, MatRef, ParamId, ParamSet, Tensor};
use crate::error::{shape_err, Result};

/// Affine layer `y = x W + b` with `W: in x out`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Weights uniform in `±1/sqrt(in_dim)`, zero bias.
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = ps.add_uniform(&format!("{name}.w"), &[in_dim, out_dim], bound, rng)?;
        let b = ps.add_uniform(&format!("{name}.b"), &[out_dim], 0.0, rng)?;
        Ok(Linear { w, b, in_dim, out_dim })
    }

    pub fn forward(&self, ps: &ParamSet, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.forward_values(ps.values(), x, batch)
    }

    pub(crate) fn forward_values(&self, values: &[Tensor], x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.in_dim {
            return shape_err(format!("linear expects {}x{} input, got {} values", batch, self.in_dim, x.len()));
        }
        let bias = values[self.b.0].data();
        let mut out = Vec::with_capacity(batch * self.out_dim);
        for _ in 0..batch {
            out.extend_from_slice(bias);
        }
        gemm(
            1.0,
            MatRef::new(x, batch, self.in_dim),
            values[self.w.0].view(),
            1.0,
            MatMut::new(&mut out, batch, self.out_dim),
        );
        Ok(out)
    }

    /// Accumulates parameter gradients; returns `dx` when requested.
    pub fn backward(
        &self,
        values: &[Tensor],
        grads: &mut [Tensor],
        x: &[f64],
        dout: &[f64],
        batch: usize,
        want_dx: bool,
    ) -> Result<Option<Vec<f64>>> {
        if x.len() != batch * self.in_dim || dout.len() != batch * self.out_dim {
            return shape_err("linear backward shape mismatch");
        }
        gemm(
            1.0,
            MatRef::new(x, batch, self.in_dim).t(),
            MatRef::new(dout, batch, self.out_dim),
            1.0,
            grads[self.w.0].view_mut(),
        );
        let db = grads[self.b.0].data_mut();
        for row in dout.chunks_exact(self.out_dim) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        if !want_dx {
            return Ok(None);
        }
        let mut dx = vec![0.0; batch * self.in_dim];
        gemm(
            1.0,
            MatRef::new(dout, batch, self.out_dim),
            values[self.w.0].view().t(),
            0.0,
            MatMut::new(&mut dx, batch, self.in_dim),
        );
        Ok(Some(dx))
    }
}
