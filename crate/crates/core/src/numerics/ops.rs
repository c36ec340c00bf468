//! Scalar and elementwise kernels with their derivatives.

use rand::Rng;

use crate::error::{shape_err, Result};

/// Log-variance clamp applied before every Gaussian likelihood.
pub const LOGVAR_MIN: f64 = -8.0;
pub const LOGVAR_MAX: f64 = 8.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_16e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_70e-10;
// 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

/// `e^x` without branches or libm calls so slice loops vectorize. The input
/// is clamped to `[-708, 708]`; agreement with `f64::exp` is within a few ulp.
#[inline(always)]
fn exp_kernel(x: f64) -> f64 {
    let x = x.clamp(-708.0, 708.0);
    let t = x * LOG2E + ROUND_MAGIC;
    let k = t - ROUND_MAGIC;
    let ki = t.to_bits().wrapping_sub(ROUND_MAGIC.to_bits());
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // Degree-13 Taylor polynomial on |r| <= ln2/2, Estrin evaluation.
    let r2 = r * r;
    let r4 = r2 * r2;
    let r8 = r4 * r4;
    let a0 = 1.0 + r;
    let a1 = 0.5 + r * (1.0 / 6.0);
    let a2 = 1.0 / 24.0 + r * (1.0 / 120.0);
    let a3 = 1.0 / 720.0 + r * (1.0 / 5_040.0);
    let a4 = 1.0 / 40_320.0 + r * (1.0 / 362_880.0);
    let a5 = 1.0 / 3_628_800.0 + r * (1.0 / 39_916_800.0);
    let a6 = 1.0 / 479_001_600.0 + r * (1.0 / 6_227_020_800.0);
    let p = (a0 + a1 * r2 + (a2 + a3 * r2) * r4) + (a4 + a5 * r2 + a6 * r4) * r8;
    f64::from_bits(ki.wrapping_add(1023) << 52) * p
}

/// In-place logistic sigmoid.
pub fn sigmoid_inplace(xs: &mut [f64]) {
    for v in xs.iter_mut() {
        *v = 1.0 / (1.0 + exp_kernel(-*v));
    }
}

/// In-place hyperbolic tangent, accurate to a few ulp in absolute terms.
pub fn tanh_inplace(xs: &mut [f64]) {
    for v in xs.iter_mut() {
        let e = exp_kernel(-2.0 * v.abs());
        let t = (1.0 - e) / (1.0 + e);
        *v = t.copysign(*v);
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Two-way softmax `(p, 1 - p)` with `p = sigmoid(a - b)`.
#[inline]
pub fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let p = sigmoid(a - b);
    [p, 1.0 - p]
}

/// Shannon entropy in nats; `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Binary cross-entropy of `sigmoid(logit)` against a soft target.
#[inline]
pub fn bce_with_logit(logit: f64, target: f64) -> f64 {
    // softplus(l) - t*l == -t ln σ(l) - (1-t) ln(1-σ(l))
    softplus(logit) - target * logit
}

#[inline]
fn clamp_logvar(lv: f64) -> (f64, bool) {
    if lv < LOGVAR_MIN {
        (LOGVAR_MIN, false)
    } else if lv > LOGVAR_MAX {
        (LOGVAR_MAX, false)
    } else {
        (lv, true)
    }
}

/// Mean over dimensions of the per-dimension Gaussian negative log-likelihood.
pub fn gaussian_nll(x: &[f64], mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if x.len() != mu.len() || x.len() != logvar.len() || x.is_empty() {
        return shape_err(format!("gaussian_nll lengths {} / {} / {}", x.len(), mu.len(), logvar.len()));
    }
    let mut acc = 0.0;
    for i in 0..x.len() {
        let (lv, _) = clamp_logvar(logvar[i]);
        let r = x[i] - mu[i];
        acc += 0.5 * (lv + r * r * (-lv).exp()) + HALF_LN_2PI;
    }
    Ok(acc / x.len() as f64)
}

/// Gradient of [`gaussian_nll`] scaled by `upstream`, accumulated into
/// `dmu` and `dlogvar`. Clamped log-variances receive zero gradient.
pub fn gaussian_nll_backward(
    x: &[f64],
    mu: &[f64],
    logvar: &[f64],
    upstream: f64,
    dmu: &mut [f64],
    dlogvar: &mut [f64],
) -> Result<()> {
    let d = x.len();
    if mu.len() != d || logvar.len() != d || dmu.len() != d || dlogvar.len() != d || d == 0 {
        return shape_err("gaussian_nll_backward length mismatch");
    }
    let scale = upstream / d as f64;
    for i in 0..d {
        let (lv, live) = clamp_logvar(logvar[i]);
        let inv = (-lv).exp();
        let r = x[i] - mu[i];
        dmu[i] += -r * inv * scale;
        if live {
            dlogvar[i] += 0.5 * (1.0 - r * r * inv) * scale;
        }
    }
    Ok(())
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 - rate;
    (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep }).collect()
}

/// Central-difference derivative of a scalar function.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;

    #[test]
    fn slice_kernels_track_std() {
        let xs: Vec<f64> = (-4000..=4000).map(|i| i as f64 * 0.0137).chain([0.0, -0.0, 1e-300]).collect();
        let mut s = xs.clone();
        let mut t = xs.clone();
        sigmoid_inplace(&mut s);
        tanh_inplace(&mut t);
        for ((x, s), t) in xs.iter().zip(&s).zip(&t) {
            assert!((s - sigmoid(*x)).abs() <= 4.0 * f64::EPSILON * sigmoid(*x).max(1e-300), "sigmoid({x})");
            assert!((t - x.tanh()).abs() <= 4.0 * f64::EPSILON, "tanh({x}): {t} vs {}", x.tanh());
        }
        let mut far = [-750.0, 750.0];
        sigmoid_inplace(&mut far);
        assert!(far[0] >= 0.0 && far[0] < 1e-300 && far[1] == 1.0);
        for x in [-700.0, -20.5, -1.0, 0.0, 0.3465, 1.0, 40.0, 700.0] {
            let e = exp_kernel(x);
            assert!((e - f64::exp(x)).abs() <= 4.0 * f64::EPSILON * f64::exp(x), "exp({x})");
        }
    }

    #[test]
    fn nll_matches_closed_forms() {
        let z = [0.0; 6];
        let v = gaussian_nll(&z, &z, &z).unwrap();
        assert!((v - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert!((v - 0.918939).abs() < 1e-6);
        let ones = [1.0; 6];
        let v = gaussian_nll(&ones, &z, &z).unwrap();
        assert!((v - 1.418939).abs() < 1e-6);
    }

    #[test]
    fn nll_rejects_length_mismatch() {
        assert!(gaussian_nll(&[0.0; 3], &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn nll_clamps_logvar() {
        let a = gaussian_nll(&[0.3], &[0.0], &[-20.0]).unwrap();
        let b = gaussian_nll(&[0.3], &[0.0], &[-8.0]).unwrap();
        assert_eq!(a, b);
        let mut dmu = [0.0];
        let mut dlv = [0.0];
        gaussian_nll_backward(&[0.3], &[0.0], &[-20.0], 1.0, &mut dmu, &mut dlv).unwrap();
        assert_eq!(dlv[0], 0.0);
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let x = [0.4, -1.2, 0.05];
        let mu = [0.1, -0.7, 0.3];
        let lv = [0.2, -0.5, 1.1];
        let mut dmu = [0.0; 3];
        let mut dlv = [0.0; 3];
        gaussian_nll_backward(&x, &mu, &lv, 1.0, &mut dmu, &mut dlv).unwrap();
        for i in 0..3 {
            let fm = |v: f64| {
                let mut m = mu;
                m[i] = v;
                gaussian_nll(&x, &m, &lv).unwrap()
            };
            let fl = |v: f64| {
                let mut l = lv;
                l[i] = v;
                gaussian_nll(&x, &mu, &l).unwrap()
            };
            let nm = central_difference(fm, mu[i], 1e-5);
            let nl = central_difference(fl, lv[i], 1e-5);
            assert!((nm - dmu[i]).abs() / dmu[i].abs().max(1e-6) < 1e-5);
            assert!((nl - dlv[i]).abs() / dlv[i].abs().max(1e-6) < 1e-5);
        }
    }

    #[test]
    fn softplus_limits() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(softplus(1000.0).is_finite());
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = stream_rng(1, Stream::Dropout, 0);
        assert!(dropout_mask(10, 0.0, &mut rng).iter().all(|&m| m == 1.0));
        let m = dropout_mask(10_000, 0.2, &mut rng);
        let kept = m.iter().filter(|&&v| v > 0.0).count() as f64 / 10_000.0;
        assert!((kept - 0.8).abs() < 0.03);
        assert!(m.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(v in proptest::collection::vec(-50.0f64..50.0, 1..8)) {
            let p = softmax(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax2_is_a_distribution(a in -700.0f64..700.0, b in -700.0f64..700.0) {
            let p = softmax2(a, b);
            prop_assert!(p[0] >= 0.0 && p[1] >= 0.0);
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }
}
