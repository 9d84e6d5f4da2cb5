use alloc::vec::Vec;

use super::curriculum::{curriculum_tick, episode_length_for, GAMMA_CAP};
use super::losses::{a2c_loss, cr_loss, tom_loss, A2cStats};
use super::rollout::RolloutBatch;
use crate::agent::Tom2cModel;
use crate::autodiff::{Adam, AdamConfig, Graph, GroupMask};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_steps: u64,
    pub workers: usize,
    /// Low-level environment steps per worker between updates.
    pub update_every: usize,
    pub entropy_weight: f64,
    pub lr: f64,
    /// Reinforcement-learning updates between theory-of-mind updates.
    pub tom_freeze: usize,
    pub gamma_rate: f64,
    pub warmup_episodes: u64,
    pub gamma0: f64,
    pub length0: usize,
    pub cr_threshold: f64,
    /// Updates of the communication-reduction phase run after training.
    pub cr_updates: usize,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 3_000_000,
            workers: 6,
            update_every: 20,
            entropy_weight: 0.005,
            lr: 1e-3,
            tom_freeze: 5,
            gamma_rate: 0.002,
            warmup_episodes: 2000,
            gamma0: 0.1,
            length0: 20,
            cr_threshold: 0.05,
            cr_updates: 0,
            max_grad_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(alloc::format!("{what} must be positive")));
        if self.workers == 0 {
            return bad("workers");
        }
        if self.update_every == 0 {
            return bad("update_every");
        }
        if self.tom_freeze == 0 {
            return bad("tom_freeze");
        }
        if self.length0 == 0 {
            return bad("length0");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr");
        }
        if !(self.gamma0 > 0.0 && self.gamma0 <= GAMMA_CAP) {
            return Err(Error::Config("gamma0 must lie in (0, 0.9]".into()));
        }
        if !(self.entropy_weight >= 0.0) || !(self.gamma_rate >= 0.0) || !(self.cr_threshold >= 0.0) {
            return Err(Error::Config("entropy_weight, gamma_rate and cr_threshold must be non-negative".into()));
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm");
        }
        Ok(())
    }

    /// High-level decisions each worker makes per update.
    pub fn decisions_per_update(&self, period: usize) -> usize {
        (self.update_every / period.max(1)).max(1)
    }
}

/// Progress counters; restored exactly when a run resumes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Counters {
    pub env_steps: u64,
    pub episodes: u64,
    pub rl_updates: u64,
    pub tom_updates: u64,
    pub cr_updates: u64,
    pub gamma: f64,
    pub episode_length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub a2c: A2cStats,
    /// Set on updates that also trained the theory-of-mind net.
    pub tom: Option<(f64, f64)>,
    pub mean_reward: f64,
    pub coverage: f64,
    pub mean_edges: f64,
    pub mean_bandwidth: f64,
    pub gi_acc: f64,
    pub oe_acc: f64,
}

/// Owns the model and optimizers; all parameter mutation happens here.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Tom2cModel,
    pub counters: Counters,
    rl_opt: Adam,
    tom_opt: Adam,
    cr_opt: Adam,
    tom_buffer: Vec<RolloutBatch>,
}

impl Trainer {
    pub fn new(config: TrainConfig, model: Tom2cModel) -> Result<Self> {
        config.validate()?;
        let adam = AdamConfig { lr: config.lr, ..AdamConfig::default() };
        let counters = Counters { gamma: config.gamma0, episode_length: config.length0, ..Counters::default() };
        Ok(Self {
            rl_opt: Adam::new(adam, GroupMask::other(), &model.params),
            tom_opt: Adam::new(adam, GroupMask::tom(), &model.params),
            cr_opt: Adam::new(adam, GroupMask::sender(), &model.params),
            tom_buffer: Vec::new(),
            counters,
            config,
            model,
        })
    }

    pub fn optimizers(&self) -> [&Adam; 3] {
        [&self.rl_opt, &self.tom_opt, &self.cr_opt]
    }

    pub fn optimizers_mut(&mut self) -> [&mut Adam; 3] {
        [&mut self.rl_opt, &mut self.tom_opt, &mut self.cr_opt]
    }

    pub fn buffered(&self) -> usize {
        self.tom_buffer.len()
    }

    pub fn gamma(&self) -> f64 {
        self.counters.gamma
    }

    pub fn episode_length(&self) -> usize {
        self.counters.episode_length
    }

    pub fn finished(&self) -> bool {
        self.counters.env_steps >= self.config.max_steps
    }

    /// Actor-critic step on everything except the theory-of-mind net.
    pub fn a2c_update(&mut self, batch: &RolloutBatch) -> Result<A2cStats> {
        let mut g = Graph::new(GroupMask::other());
        let loss = a2c_loss(&mut g, &self.model, batch, self.counters.gamma, self.config.entropy_weight)?;
        g.backward_into(loss.total, &mut self.model.params)?;
        self.model.params.clip_grad_norm(GroupMask::other(), self.config.max_grad_norm);
        self.rl_opt.step(&mut self.model.params)?;
        self.counters.rl_updates += 1;
        Ok(loss.stats)
    }

    /// Supervised step of the theory-of-mind net on `batches`.
    pub fn tom_update_on(&mut self, batches: &[&RolloutBatch]) -> Result<(f64, f64)> {
        if batches.iter().all(|b| b.is_empty()) {
            return Err(Error::Invalid("theory-of-mind update with an empty buffer".into()));
        }
        let mut g = Graph::new(GroupMask::tom());
        let loss = tom_loss(&mut g, &self.model, batches)?;
        g.backward_into(loss.total, &mut self.model.params)?;
        self.model.params.clip_grad_norm(GroupMask::tom(), self.config.max_grad_norm);
        self.tom_opt.step(&mut self.model.params)?;
        self.counters.tom_updates += 1;
        Ok((g.value(loss.goal).item(), g.value(loss.relation).item()))
    }

    /// Trains on the buffered batches and clears the buffer.
    pub fn tom_update(&mut self) -> Result<(f64, f64)> {
        if self.tom_buffer.is_empty() {
            return Err(Error::Invalid("theory-of-mind update with an empty buffer".into()));
        }
        let buffer = core::mem::take(&mut self.tom_buffer);
        let refs: Vec<&RolloutBatch> = buffer.iter().collect();
        self.tom_update_on(&refs)
    }

    /// Communication-reduction step on the message sender only. Returns
    /// `None` when the batch holds no labeled edge.
    pub fn cr_update(&mut self, batch: &RolloutBatch) -> Result<Option<f64>> {
        let mut g = Graph::new(GroupMask::sender());
        let Some((loss, _)) = cr_loss(&mut g, &self.model, batch, self.config.cr_threshold)? else {
            return Ok(None);
        };
        g.backward_into(loss, &mut self.model.params)?;
        self.model.params.clip_grad_norm(GroupMask::sender(), self.config.max_grad_norm);
        self.cr_opt.step(&mut self.model.params)?;
        self.counters.cr_updates += 1;
        Ok(Some(g.value(loss).item()))
    }

    /// Full update for one collected batch: actor-critic, buffered
    /// theory-of-mind training every `tom_freeze` updates, then the
    /// discount/length schedule once warm-up is over.
    pub fn apply(&mut self, batch: RolloutBatch) -> Result<UpdateStats> {
        let a2c = self.a2c_update(&batch)?;
        self.counters.env_steps += batch.env_steps() as u64;
        self.counters.episodes += batch.episodes_finished() as u64;
        let mut stats = summarize(&batch);
        stats.a2c = a2c;
        self.tom_buffer.push(batch);
        if self.tom_buffer.len() >= self.config.tom_freeze {
            stats.tom = Some(self.tom_update()?);
        }
        if self.counters.episodes >= self.config.warmup_episodes {
            let (gamma, _) = curriculum_tick(self.counters.gamma, self.config.gamma_rate);
            self.counters.gamma = gamma;
            self.counters.episode_length = episode_length_for(gamma).max(self.counters.episode_length);
        }
        Ok(stats)
    }
}

/// Rollout statistics of a batch (rewards, coverage, communication, ToM accuracy).
pub fn summarize(batch: &RolloutBatch) -> UpdateStats {
    let t = batch.transitions().max(1) as f64;
    let mut s = UpdateStats::default();
    let (mut gi, mut oe, mut total) = (0usize, 0usize, 0usize);
    for step in batch.steps() {
        s.mean_reward += step.reward / t;
        s.coverage += step.coverage / t;
        s.mean_edges += step.comm.edge_count() as f64 / t;
        s.mean_bandwidth += step.comm.bandwidth() as f64 / t;
        let n = step.poses.len();
        for i in 0..n {
            for j in (0..n).filter(|j| step.reachable[i][*j]) {
                for q in 0..step.goal_labels[j].len() {
                    total += 1;
                    gi += usize::from((step.gstar[i][j][q] > 0.5) == step.goal_labels[j][q]);
                    oe += usize::from((step.cstar[i][j][q] > 0.5) == step.relation_labels[j][q]);
                }
            }
        }
    }
    if total > 0 {
        s.gi_acc = gi as f64 / total as f64;
        s.oe_acc = oe as f64 / total as f64;
    }
    s
}
