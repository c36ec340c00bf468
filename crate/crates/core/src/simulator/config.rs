use serde::{Deserialize, Serialize};

use crate::error::{ChaseError, Result};

/// Fraction of matched pairs generated in each regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeMix {
    pub intermittent: f64,
    pub short_local: f64,
}

/// Sequences assigned to the fixed train/val/test split tags.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Latent bridge-evidence model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeModel {
    /// Visibility loss at full ambiguity: `b = u (1 - degrade * alpha)`.
    pub degrade: f64,
    /// Std of the additive visibility noise.
    pub visibility_noise: f64,
    /// False-positive amplitude for negatives: `false_gain * alpha * proximity`.
    pub false_gain: f64,
    /// Proximity vanishes beyond `proximity_range * rest_length`.
    pub proximity_range: f64,
    /// Pixel area of a fully visible bridge.
    pub support_scale: f64,
    /// Integer noise std on the support count, `base + slope * alpha`.
    pub support_noise: [f64; 2],
    /// Score noise std, `base + slope * alpha`.
    pub score_noise: [f64; 2],
    /// Width noise std, `base + slope * alpha`.
    pub width_noise: [f64; 2],
}

impl Default for BridgeModel {
    fn default() -> Self {
        BridgeModel {
            degrade: 0.9,
            visibility_noise: 0.05,
            false_gain: 0.35,
            proximity_range: 1.5,
            support_scale: 40.0,
            support_noise: [1.0, 4.0],
            score_noise: [0.05, 0.2],
            width_noise: [0.05, 0.1],
        }
    }
}

/// Simulator configuration; every dynamics constant is exposed here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub frames: usize,
    /// Vesicle radii are drawn uniformly from this range (unit box).
    pub radius_range: [f64; 2],
    /// Per-axis Brownian step std per frame.
    pub brownian_sigma: f64,
    pub spring_k: f64,
    /// Rest length is `r1 + r2 + rest_offset`.
    pub rest_offset: f64,
    /// Initial surface gap beyond rest length.
    pub initial_gap: [f64; 2],
    /// Shared drift speed per frame during active windows (negatives).
    pub drift_amplitude: f64,
    /// Maximum drift heading rotation per frame (radians).
    pub drift_turn: f64,
    /// Pull towards `proximity_target * rest_length` during active windows (negatives).
    pub proximity_pull: f64,
    pub proximity_target: f64,
    /// Maximum common-mode drift speed present in every sequence.
    pub background_drift: f64,
    /// Positional observation noise std; scaled by `1 + 2 alpha`.
    pub obs_noise: f64,
    pub bridge: BridgeModel,
    pub regime_mix: RegimeMix,
    /// Total number of sequences (two per matched pair).
    pub sequences: usize,
    pub split_counts: SplitCounts,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            frames: 64,
            radius_range: [0.03, 0.06],
            brownian_sigma: 0.005,
            spring_k: 0.15,
            rest_offset: 0.02,
            initial_gap: [0.02, 0.12],
            drift_amplitude: 0.01,
            drift_turn: 0.05,
            proximity_pull: 0.15,
            proximity_target: 1.2,
            background_drift: 0.0,
            obs_noise: 0.008,
            bridge: BridgeModel::default(),
            regime_mix: RegimeMix { intermittent: 0.5, short_local: 0.5 },
            sequences: 3360,
            split_counts: SplitCounts { train: 2400, val: 480, test: 480 },
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ChaseError::Config(m.to_string()));
        if self.frames < 2 {
            return bad("frames must be at least 2");
        }
        let scales = [
            self.brownian_sigma,
            self.spring_k,
            self.drift_amplitude,
            self.proximity_pull,
            self.background_drift,
            self.obs_noise,
            self.bridge.visibility_noise,
        ];
        if scales.iter().any(|&s| !(s >= 0.0)) {
            return bad("noise scales and force constants must be non-negative");
        }
        if !(self.radius_range[0] > 0.0 && self.radius_range[0] <= self.radius_range[1] && self.radius_range[1] < 0.25) {
            return bad("radius range must satisfy 0 < min <= max < 0.25");
        }
        let mix = self.regime_mix.intermittent + self.regime_mix.short_local;
        if (mix - 1.0).abs() > 1e-9 || self.regime_mix.intermittent < 0.0 || self.regime_mix.short_local < 0.0 {
            return bad("regime mix must be non-negative and sum to 1");
        }
        if self.sequences == 0 || self.sequences % 4 != 0 {
            return bad("sequence count must be a positive multiple of 4");
        }
        let split_total = self.split_counts.train + self.split_counts.val + self.split_counts.test;
        if split_total == 0 {
            return bad("split counts must not all be zero");
        }
        Ok(())
    }

    pub fn rest_length(&self, r1: f64, r2: f64) -> f64 {
        r1 + r2 + self.rest_offset
    }
}
