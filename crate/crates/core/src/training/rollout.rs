use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{CommRound, DecideMode, Goal, Tom2cModel};
use crate::autodiff::Matrix;
use crate::geometry::{EnvConfig, Observation, Pose2D, Task, TeamEnv};
use crate::math::PI;
use crate::Result;

/// Where the executed goals come from during collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalSource {
    Policy(DecideMode),
    /// Fixed rule, see [`scripted_goal`].
    Scripted,
    /// Each visible target independently with probability 1/2 (coverage),
    /// or a uniformly random visible landmark (navigation).
    Random,
}

/// Scripted teammates: choose every visible target in the front half-plane
/// (coverage), or the nearest visible landmark (navigation).
pub fn scripted_goal(task: Task, obs: &Observation) -> Goal {
    match task {
        Task::Msmtc => Goal::Multi(
            obs.rows.iter().zip(&obs.visible).map(|(r, v)| *v && r[3].abs() <= PI / 2.0).collect(),
        ),
        Task::Cn => {
            let best = (0..obs.len())
                .filter(|q| obs.visible[*q])
                .min_by(|a, b| obs.rows[*a][2].total_cmp(&obs.rows[*b][2]))
                .unwrap_or(0);
            Goal::One(best)
        }
    }
}

pub fn random_goal(task: Task, obs: &Observation, rng: &mut impl Rng) -> Goal {
    match task {
        Task::Msmtc => Goal::Multi(obs.visible.iter().map(|v| *v && rng.gen_bool(0.5)).collect()),
        Task::Cn => {
            let vis: Vec<usize> = (0..obs.len()).filter(|q| obs.visible[*q]).collect();
            if vis.is_empty() {
                Goal::One(0)
            } else {
                Goal::One(vis[rng.gen_range(0..vis.len())])
            }
        }
    }
}

/// One high-level transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub observations: Vec<Observation>,
    pub poses: Vec<Pose2D>,
    pub hidden: Vec<Matrix>,
    pub edge_noise: Option<Vec<Matrix>>,
    pub goals: Vec<Goal>,
    pub probs: Vec<Vec<f64>>,
    pub silent_probs: Vec<Vec<f64>>,
    /// Sum of the low-level team rewards until the next decision.
    pub reward: f64,
    /// Mean coverage (or occupancy) over those low-level steps.
    pub coverage: f64,
    pub low_level_steps: usize,
    pub done: bool,
    pub value: f64,
    /// `goal_labels[j]`: agent `j`'s executed goal as per-target flags.
    pub goal_labels: Vec<Vec<bool>>,
    pub relation_labels: Vec<Vec<bool>>,
    pub comm: CommRound,
    pub gstar: Vec<Vec<Vec<f64>>>,
    pub cstar: Vec<Vec<Vec<f64>>>,
    pub reachable: Vec<Vec<bool>>,
}

/// Consecutive transitions of one worker within one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub worker: usize,
    pub steps: Vec<StepRecord>,
    /// Critic estimate after the last step, zero when the episode ended.
    pub bootstrap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBatch {
    pub segments: Vec<Segment>,
    pub pose_radius: f64,
}

impl RolloutBatch {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.segments.iter().flat_map(|s| s.steps.iter())
    }

    pub fn transitions(&self) -> usize {
        self.segments.iter().map(|s| s.steps.len()).sum()
    }

    pub fn env_steps(&self) -> usize {
        self.steps().map(|s| s.low_level_steps).sum()
    }

    pub fn episodes_finished(&self) -> usize {
        self.segments.iter().filter(|s| s.steps.last().is_some_and(|t| t.done)).count()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions() == 0
    }
}

/// A rollout worker: one environment with its own random stream and the
/// team's recurrent state.
#[derive(Debug, Clone)]
pub struct Worker<E: TeamEnv> {
    pub id: usize,
    cfg: EnvConfig,
    env: E,
    hidden: Vec<Matrix>,
    rng: ChaCha8Rng,
    pub episodes_finished: u64,
}

impl<E: TeamEnv> Worker<E> {
    pub fn new(id: usize, cfg: &EnvConfig, seed: u64, model: &Tom2cModel) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64);
        let env = E::reset_episode(cfg, rng.gen())?;
        let hidden = model.initial_hidden(cfg.n_agents);
        Ok(Self { id, cfg: cfg.clone(), env, hidden, rng, episodes_finished: 0 })
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Takes effect at the next episode start.
    pub fn set_episode_length(&mut self, length: usize) {
        self.cfg.episode_length = length;
    }

    fn new_episode(&mut self, model: &Tom2cModel) -> Result<()> {
        self.env = E::reset_episode(&self.cfg, self.rng.gen())?;
        self.hidden = model.initial_hidden(self.cfg.n_agents);
        Ok(())
    }

    /// Runs up to `decisions` high-level steps, stopping early when the
    /// episode ends (the next call then starts a fresh one).
    pub fn collect(
        &mut self,
        model: &Tom2cModel,
        decisions: usize,
        source: GoalSource,
        pose_radius: f64,
    ) -> Result<Segment> {
        let task = self.cfg.task;
        let k = self.cfg.high_level_period;
        let mode = match source {
            GoalSource::Policy(m) => m,
            _ => DecideMode::Sample,
        };
        let mut steps = Vec::with_capacity(decisions);
        let mut done = false;
        for _ in 0..decisions {
            let observations = self.env.observations();
            let poses = self.env.poses();
            let relation_labels = self.env.relation_labels();
            let dec = model.decide_team(&observations, &poses, &self.hidden, pose_radius, mode, &mut self.rng)?;
            let goals: Vec<Goal> = match source {
                GoalSource::Policy(_) => dec.goals.clone(),
                GoalSource::Scripted => observations.iter().map(|o| scripted_goal(task, o)).collect(),
                GoalSource::Random => observations.iter().map(|o| random_goal(task, o, &mut self.rng)).collect(),
            };
            let m = self.env.m_targets();
            let goal_labels = goals.iter().map(|g| g.indicator(m)).collect();

            let mut current = observations.clone();
            let (mut reward, mut coverage, mut count) = (0.0, 0.0, 0);
            for _ in 0..k {
                let actions: Vec<E::Action> =
                    (0..current.len()).map(|i| self.env.act(i, &current[i], &goals[i])).collect();
                let res = self.env.step(&actions)?;
                reward += res.team_reward;
                coverage += res.info.coverage_rate;
                count += 1;
                current = res.observations;
                if res.done {
                    done = true;
                    break;
                }
            }
            let hidden = core::mem::replace(&mut self.hidden, dec.next_hidden);
            steps.push(StepRecord {
                observations,
                poses,
                hidden,
                edge_noise: dec.edge_noise,
                goals,
                probs: dec.probs,
                silent_probs: dec.silent_probs,
                reward,
                coverage: coverage / count as f64,
                low_level_steps: count,
                done,
                value: dec.value,
                goal_labels,
                relation_labels,
                comm: dec.comm,
                gstar: dec.gstar,
                cstar: dec.cstar,
                reachable: dec.reachable,
            });
            if done {
                break;
            }
        }
        let bootstrap = if done {
            self.episodes_finished += 1;
            self.new_episode(model)?;
            0.0
        } else {
            let obs = self.env.observations();
            let poses = self.env.poses();
            let mut scratch = self.rng.clone();
            model.decide_team(&obs, &poses, &self.hidden, pose_radius, DecideMode::Greedy, &mut scratch)?.value
        };
        Ok(Segment { worker: self.id, steps, bootstrap })
    }
}
