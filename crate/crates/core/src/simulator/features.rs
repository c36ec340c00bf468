use rand::Rng;
use rand_distr::StandardNormal;

use super::{ActivityProfile, Label, SimConfig, Trajectory};

/// Number of per-frame features.
pub const FEATURE_DIM: usize = 6;

/// Column names, in order.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "euclidean_distance",
    "distance_change",
    "relative_motion",
    "spatial_support_count",
    "median_bridge_score",
    "median_bridge_width",
];

/// Latent bridge visibility `b(t)` before observation noise.
///
/// Connected pairs show `u(t) (1 - degrade * alpha)` plus visibility noise.
/// Negatives show a false bridge `false_gain * alpha * proximity(t)` whose
/// proximity term ramps from 1 at the rest length to 0 at
/// `proximity_range * rest_length`.
pub fn bridge_state<R: Rng>(
    label: Label,
    profile: &ActivityProfile,
    traj: &Trajectory,
    alpha: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Vec<f64> {
    let bm = &cfg.bridge;
    let rest = traj.rest_length;
    (0..traj.frames())
        .map(|t| match label {
            Label::Connected => {
                let noise = bm.visibility_noise * rng.sample::<f64, _>(StandardNormal);
                (profile.u[t] * (1.0 - bm.degrade * alpha) + noise).clamp(0.0, 1.0)
            }
            Label::NotConnected => {
                let d = traj.distance(t);
                let span = (bm.proximity_range - 1.0) * rest;
                let prox = if span > 0.0 { ((bm.proximity_range * rest - d) / span).clamp(0.0, 1.0) } else { 0.0 };
                (bm.false_gain * alpha * prox).clamp(0.0, 1.0)
            }
        })
        .collect()
}

fn cosine(a: [f64; 2], b: [f64; 2]) -> f64 {
    let na = (a[0] * a[0] + a[1] * a[1]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1]).sqrt();
    if na < 1e-15 || nb < 1e-15 {
        0.0
    } else {
        ((a[0] * b[0] + a[1] * b[1]) / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Observes a trajectory and returns the `T x 6` feature matrix.
///
/// Positions receive `obs_noise * (1 + 2 alpha)` Gaussian noise; velocities
/// are first differences of the observed positions (zero at frame 0).
pub fn extract_features<R: Rng>(
    traj: &Trajectory,
    bridge: &[f64],
    alpha: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Vec<[f64; FEATURE_DIM]> {
    let frames = traj.frames();
    let sigma = cfg.obs_noise * (1.0 + 2.0 * alpha);
    let mut observe = |p: [f64; 2]| {
        if sigma > 0.0 {
            [
                p[0] + sigma * rng.sample::<f64, _>(StandardNormal),
                p[1] + sigma * rng.sample::<f64, _>(StandardNormal),
            ]
        } else {
            p
        }
    };
    let o1: Vec<[f64; 2]> = traj.p1.iter().map(|&p| observe(p)).collect();
    let o2: Vec<[f64; 2]> = traj.p2.iter().map(|&p| observe(p)).collect();
    let bm = &cfg.bridge;
    let mut out = Vec::with_capacity(frames);
    let mut prev_d = 0.0;
    for t in 0..frames {
        let d = ((o2[t][0] - o1[t][0]).powi(2) + (o2[t][1] - o1[t][1]).powi(2)).sqrt();
        let dd = if t == 0 { 0.0 } else { d - prev_d };
        prev_d = d;
        let rel = if t == 0 {
            0.0
        } else {
            let v1 = [o1[t][0] - o1[t - 1][0], o1[t][1] - o1[t - 1][1]];
            let v2 = [o2[t][0] - o2[t - 1][0], o2[t][1] - o2[t - 1][1]];
            cosine(v1, v2)
        };
        let b = bridge[t];
        let n = |r: &mut R, s: [f64; 2]| (s[0] + s[1] * alpha) * r.sample::<f64, _>(StandardNormal);
        let support = ((bm.support_scale * b).round() + n(rng, bm.support_noise).round()).max(0.0);
        let score = (b + n(rng, bm.score_noise)).clamp(0.0, 1.0);
        let width = (0.5 * b + n(rng, bm.width_noise)).clamp(0.0, 1.0);
        out.push([d, dd, rel, support, score, width]);
    }
    out
}
