//! Centralized training: rollout collection, actor-critic and
//! theory-of-mind objectives, communication reduction and the
//! discount/episode-length schedule.

mod curriculum;
mod losses;
mod rollout;
mod trainer;

pub use curriculum::{curriculum_tick, episode_length_for, GAMMA_CAP, LENGTH_CAP};
pub use losses::{
    a2c_loss, bce, bce_sum, cr_labels, cr_loss, goal_kl, kl_bernoulli, n_step_returns, tom_loss, A2cLoss, A2cStats,
    EdgeLabel, TomLoss, PROB_FLOOR,
};
pub use rollout::{random_goal, scripted_goal, GoalSource, RolloutBatch, Segment, StepRecord, Worker};
pub use trainer::{summarize, Counters, TrainConfig, Trainer, UpdateStats};
