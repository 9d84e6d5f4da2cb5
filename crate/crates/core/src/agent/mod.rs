//! The per-agent pipeline: observation encoding, theory-of-mind inference,
//! communication graph, message exchange and goal selection, plus the
//! rule-based low-level executors.

mod executor;
mod model;

pub use executor::{executor_cn, executor_msmtc, STAY_TOLERANCE};
pub use model::{
    pose_features, row_features, AgentVars, CommRound, DecideMode, ModelConfig, TeamDecision, TeamForward, TeamInput, TomVars,
    Tom2cModel, POSE_FEATURES, ROW_FEATURES,
};

use alloc::vec::Vec;

/// A high-level sub-goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Goal {
    /// Coverage: the set of chosen targets, one flag per target.
    Multi(Vec<bool>),
    /// Navigation: index of the chosen landmark.
    One(usize),
}

impl Goal {
    /// Per-target indicator vector of length `m`.
    pub fn indicator(&self, m: usize) -> Vec<bool> {
        match self {
            Goal::Multi(v) => v.clone(),
            Goal::One(q) => (0..m).map(|k| k == *q).collect(),
        }
    }

    pub fn chooses(&self, q: usize) -> bool {
        match self {
            Goal::Multi(v) => v.get(q).copied().unwrap_or(false),
            Goal::One(k) => *k == q,
        }
    }
}
