//! Vesicle-pair simulator.
//!
//! Each matched pair shares a latent activity profile `u(t)`, an ambiguity
//! level and starting geometry. The connected member is spring-coupled
//! while `u(t)` is active; the not-connected member reuses the same timing
//! to drive shared drift and temporary proximity.

mod activity;
mod config;
mod dataset;
mod dynamics;
mod features;
mod probe;

use serde::{Deserialize, Serialize};

pub use activity::{sample_activity_profile, ActivityProfile};
pub use config::{BridgeModel, RegimeMix, SimConfig, SplitCounts};
pub use dataset::{
    ambiguity_bin, content_hash, generate_dataset, jsonl_bytes, read_jsonl, read_manifest, write_dataset, write_jsonl, Dataset,
    DatasetCounts, DatasetManifest,
};
pub use dynamics::{simulate_trajectory, PairGeometry, Trajectory};
pub use features::{bridge_state, extract_features, FEATURE_DIM, FEATURE_NAMES};
pub use probe::separability_probe;

use rand::Rng;

/// Ambiguity level at and above which a sequence is flagged truly ambiguous.
pub const AMBIGUITY_THRESHOLD: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Connected,
    NotConnected,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Connected, Label::NotConnected];

    /// Class index: connected = 0, not_connected = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Connected => 0,
            Label::NotConnected => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Connected
        } else {
            Label::NotConnected
        }
    }

    pub fn other(self) -> Label {
        Label::from_index(1 - self.index())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Connected => "connected",
            Label::NotConnected => "not_connected",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Intermittent,
    ShortLocal,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::Intermittent, Regime::ShortLocal];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// One simulated sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: u64,
    pub pair_id: u64,
    pub label: Label,
    pub regime: Regime,
    pub alpha: f64,
    pub ambiguous: bool,
    pub split: SplitTag,
    pub features: Vec<[f64; FEATURE_DIM]>,
    /// Latent activity; kept in memory only.
    #[serde(skip)]
    pub activity: Vec<f64>,
}

pub fn is_ambiguous(alpha: f64) -> bool {
    alpha >= AMBIGUITY_THRESHOLD
}

/// Simulates one labelled member of a matched pair.
pub fn simulate_pair<R: Rng>(
    id: u64,
    pair_id: u64,
    label: Label,
    profile: &ActivityProfile,
    geom: &PairGeometry,
    alpha: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> SequenceRecord {
    let alpha = alpha.clamp(0.0, 1.0);
    let traj = simulate_trajectory(label, profile, geom, cfg, rng);
    let bridge = bridge_state(label, profile, &traj, alpha, cfg, rng);
    let features = extract_features(&traj, &bridge, alpha, cfg, rng);
    SequenceRecord {
        id,
        pair_id,
        label,
        regime: profile.regime,
        alpha,
        ambiguous: is_ambiguous(alpha),
        split: SplitTag::Train,
        features,
        activity: profile.u.clone(),
    }
}
