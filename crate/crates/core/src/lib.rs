//! Hypothesis-driven selective prediction for temporally ambiguous binary
//! decisions.
//!
//! The pipeline has three learned stages: a dual-hypothesis GRU backbone
//! that scores how well "connected" and "not connected" dynamics explain a
//! sequence, a seed ensemble that fuses those scores with an auxiliary
//! classifier, and a cost-aware ranking selector that decides when to
//! abstain. A vesicle-pair simulator provides controlled data, and the
//! harness runs stratified cross-validation against single-branch baselines.

pub mod backbone;
pub mod baselines;
pub mod data;
pub mod ensemble;
pub mod harness;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod persist;
pub mod rng;
pub mod selector;
pub mod simulator;
pub mod train;

pub use error::{ChaseError, Result};
