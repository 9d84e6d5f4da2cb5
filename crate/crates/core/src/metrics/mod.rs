//! Heuristic search reference policy and evaluation metrics.

mod eval;
mod heuristic;

pub use eval::{
    bandwidth, coverage_ratio, episode_seed, eval_policy, record_episode, run_episode, scalability_grid, tom_accuracy,
    EpisodeStats, EvalReport, Frame, Policy, Summary,
};
pub use heuristic::{heuristic_action, heuristic_action_scoped, heuristic_objective, HeuristicScope, HEURISTIC_MAX_AGENTS, HEURISTIC_TIE};
