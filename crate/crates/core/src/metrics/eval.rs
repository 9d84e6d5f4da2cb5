use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::heuristic::heuristic_action;
use crate::agent::{DecideMode, Goal, Tom2cModel};
use crate::cn::CnEnv;
use crate::geometry::{EnvConfig, Obstacle, Pose2D, Task, TeamEnv, Vec2};
use crate::math;
use crate::msmtc::MsmtcEnv;
use crate::training::{random_goal, scripted_goal};
use crate::{Error, Result};

/// Policies the evaluator can drive.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Privileged exhaustive search (coverage task only); sends no messages.
    Heuristic,
    /// Random goals with the rule-based executor; sends no messages.
    RandomGoals,
    /// The fixed scripted goal rule; sends no messages.
    Scripted,
    Model { model: &'a Tom2cModel, mode: DecideMode },
}

/// Total scalar volume of `edges` messages of `per_message` entries.
pub fn bandwidth(edges: f64, per_message: usize) -> f64 {
    edges * per_message as f64
}

/// Fraction of `predictions` on the same side of `threshold` as `labels`.
pub fn tom_accuracy(predictions: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape { op: "tom_accuracy", left: (1, predictions.len()), right: (1, labels.len()) });
    }
    if labels.is_empty() {
        return Err(Error::Invalid("accuracy over zero entries".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| (**p > threshold) == **y).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    /// Sum of team rewards over the episode.
    pub reward: f64,
    /// Mean per-step coverage rate.
    pub coverage: f64,
    /// Mean retained edges per communication round.
    pub edges: f64,
    /// Mean scalar message volume per communication round.
    pub bandwidth: f64,
    pub gi_hits: usize,
    pub oe_hits: usize,
    pub tom_entries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Population mean and standard deviation.
    pub fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count();
        if n == 0 {
            return Self::default();
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Self { mean, std: math::sqrt(var) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub mean_reward: Summary,
    pub coverage: Summary,
    pub comm_edges: Summary,
    pub comm_bandwidth: Summary,
    /// `None` for policies without theory-of-mind predictions.
    pub tom_gi_acc: Option<f64>,
    pub tom_oe_acc: Option<f64>,
    pub episodes: usize,
}

impl EvalReport {
    pub fn from_episodes(stats: &[EpisodeStats]) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::Invalid("evaluation needs at least one episode".into()));
        }
        let entries: usize = stats.iter().map(|s| s.tom_entries).sum();
        let acc = |f: fn(&EpisodeStats) -> usize| {
            (entries > 0).then(|| stats.iter().map(f).sum::<usize>() as f64 / entries as f64)
        };
        Ok(Self {
            mean_reward: Summary::of(stats.iter().map(|s| s.reward)),
            coverage: Summary::of(stats.iter().map(|s| s.coverage)),
            comm_edges: Summary::of(stats.iter().map(|s| s.edges)),
            comm_bandwidth: Summary::of(stats.iter().map(|s| s.bandwidth)),
            tom_gi_acc: acc(|s| s.gi_hits),
            tom_oe_acc: acc(|s| s.oe_hits),
            episodes: stats.len(),
        })
    }
}

/// Seed of evaluation episode `k`; the schedule is fixed per base seed.
pub fn episode_seed(base: u64, k: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64)
}

/// One low-level step of a recorded episode, taken after the step.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub step: usize,
    pub agents: Vec<Pose2D>,
    pub targets: Vec<Vec2>,
    pub obstacles: Vec<Obstacle>,
    /// Directed (sender, receiver) messages; only the first step after a
    /// decision carries them.
    pub comm: Vec<(usize, usize)>,
    pub coverage: f64,
    pub reward: f64,
}

trait Scene: TeamEnv {
    fn targets(&self) -> Vec<Vec2>;
    fn obstacles(&self) -> Vec<Obstacle>;

    fn frame(&self, comm: Vec<(usize, usize)>, coverage: f64, reward: f64) -> Frame {
        Frame {
            step: self.step_count(),
            agents: self.poses(),
            targets: self.targets(),
            obstacles: self.obstacles(),
            comm,
            coverage,
            reward,
        }
    }
}

impl Scene for MsmtcEnv {
    fn targets(&self) -> Vec<Vec2> {
        self.state().targets.iter().map(|t| t.position).collect()
    }

    fn obstacles(&self) -> Vec<Obstacle> {
        self.state().obstacles.clone()
    }
}

impl Scene for CnEnv {
    fn targets(&self) -> Vec<Vec2> {
        self.state().landmarks.clone()
    }

    fn obstacles(&self) -> Vec<Obstacle> {
        Vec::new()
    }
}

fn run_team<E: Scene>(
    mut env: E,
    policy: Policy,
    seed: u64,
    pose_radius: f64,
    mut frames: Option<&mut Vec<Frame>>,
) -> Result<EpisodeStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let n = env.n_agents();
    let m = env.m_targets();
    let k = env.config().high_level_period;
    let mut hidden = match policy {
        Policy::Model { model, .. } => model.initial_hidden(n),
        _ => Vec::new(),
    };
    let mut stats = EpisodeStats::default();
    let (mut steps, mut rounds) = (0usize, 0usize);
    let mut done = false;
    while !done {
        let obs = env.observations();
        let mut comm = Vec::new();
        let goals: Vec<Goal> = match policy {
            Policy::RandomGoals => obs.iter().map(|o| random_goal(env.config().task, o, &mut rng)).collect(),
            Policy::Scripted => obs.iter().map(|o| scripted_goal(env.config().task, o)).collect(),
            Policy::Model { model, mode } => {
                let poses = env.poses();
                let labels = env.relation_labels();
                let dec = model.decide_team(&obs, &poses, &hidden, pose_radius, mode, &mut rng)?;
                rounds += 1;
                stats.edges += dec.comm.edge_count() as f64;
                stats.bandwidth += dec.comm.bandwidth() as f64;
                comm = dec.comm.messages.iter().map(|(s, r, _)| (*s, *r)).collect();
                for i in 0..n {
                    for j in (0..n).filter(|j| dec.reachable[i][*j]) {
                        let truth = dec.goals[j].indicator(m);
                        for q in 0..m {
                            stats.tom_entries += 1;
                            stats.gi_hits += usize::from((dec.gstar[i][j][q] > 0.5) == truth[q]);
                            stats.oe_hits += usize::from((dec.cstar[i][j][q] > 0.5) == labels[j][q]);
                        }
                    }
                }
                hidden = dec.next_hidden;
                dec.goals
            }
            Policy::Heuristic => return Err(Error::Invalid("heuristic policy runs on the coverage task only".into())),
        };
        let mut current = obs;
        for _ in 0..k {
            let actions: Vec<E::Action> = (0..n).map(|i| env.act(i, &current[i], &goals[i])).collect();
            let res = env.step(&actions)?;
            stats.reward += res.team_reward;
            stats.coverage += res.info.coverage_rate;
            steps += 1;
            if let Some(f) = frames.as_deref_mut() {
                f.push(env.frame(core::mem::take(&mut comm), res.info.coverage_rate, res.team_reward));
            }
            current = res.observations;
            if res.done {
                done = true;
                break;
            }
        }
    }
    stats.coverage /= steps.max(1) as f64;
    if rounds > 0 {
        stats.edges /= rounds as f64;
        stats.bandwidth /= rounds as f64;
    }
    Ok(stats)
}

fn run_heuristic(mut env: MsmtcEnv, mut frames: Option<&mut Vec<Frame>>) -> Result<EpisodeStats> {
    let mut stats = EpisodeStats::default();
    let mut steps = 0usize;
    loop {
        let actions = heuristic_action(env.state(), env.cfg())?;
        let res = env.msmtc_step(&actions)?;
        stats.reward += res.team_reward;
        stats.coverage += res.info.coverage_rate;
        steps += 1;
        if let Some(f) = frames.as_deref_mut() {
            f.push(env.frame(Vec::new(), res.info.coverage_rate, res.team_reward));
        }
        if res.done {
            break;
        }
    }
    stats.coverage /= steps as f64;
    Ok(stats)
}

/// Runs one evaluation episode with environment seed `seed`.
pub fn run_episode(policy: Policy, cfg: &EnvConfig, seed: u64, pose_radius: f64) -> Result<EpisodeStats> {
    dispatch(policy, cfg, seed, pose_radius, None)
}

/// [`run_episode`] that also returns one [`Frame`] per low-level step.
pub fn record_episode(policy: Policy, cfg: &EnvConfig, seed: u64, pose_radius: f64) -> Result<(EpisodeStats, Vec<Frame>)> {
    let mut frames = Vec::with_capacity(cfg.episode_length);
    let stats = dispatch(policy, cfg, seed, pose_radius, Some(&mut frames))?;
    Ok((stats, frames))
}

fn dispatch(policy: Policy, cfg: &EnvConfig, seed: u64, pose_radius: f64, frames: Option<&mut Vec<Frame>>) -> Result<EpisodeStats> {
    match (cfg.task, policy) {
        (Task::Msmtc, Policy::Heuristic) => run_heuristic(MsmtcEnv::reset_episode(cfg, seed)?, frames),
        (Task::Msmtc, _) => run_team(MsmtcEnv::reset_episode(cfg, seed)?, policy, seed, pose_radius, frames),
        (Task::Cn, _) => run_team(CnEnv::reset_episode(cfg, seed)?, policy, seed, pose_radius, frames),
    }
}

/// Sequential evaluation over the fixed seed schedule of `base_seed`.
pub fn eval_policy(policy: Policy, cfg: &EnvConfig, episodes: usize, base_seed: u64, pose_radius: f64) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be positive".into()));
    }
    let stats = (0..episodes)
        .map(|k| run_episode(policy, cfg, episode_seed(base_seed, k), pose_radius))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_episodes(&stats)
}

/// Coverage ratio of a policy to the heuristic. Both zero counts as parity.
pub fn coverage_ratio(policy_coverage: f64, heuristic_coverage: f64) -> f64 {
    if heuristic_coverage > 0.0 {
        policy_coverage / heuristic_coverage
    } else if policy_coverage == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// `ratio[a][t]` for `agents[a]` sensors and `targets[t]` targets.
pub fn scalability_grid(
    policy: Policy,
    base: &EnvConfig,
    agents: &[usize],
    targets: &[usize],
    episodes: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if base.task != Task::Msmtc {
        return Err(Error::Config("the scalability grid uses the coverage task".into()));
    }
    if let Some(p) = agents.iter().find(|p| **p > super::HEURISTIC_MAX_AGENTS) {
        return Err(Error::Config(format!("{p} sensors exceed the exhaustive-search bound")));
    }
    let mut out = Vec::with_capacity(agents.len());
    for &p in agents {
        let mut row = Vec::with_capacity(targets.len());
        for &q in targets {
            let mut cfg = base.clone();
            cfg.n_agents = p;
            cfg.m_targets = q;
            let hs = eval_policy(Policy::Heuristic, &cfg, episodes, seed, f64::INFINITY)?;
            let own = eval_policy(policy, &cfg, episodes, seed, f64::INFINITY)?;
            row.push(coverage_ratio(own.coverage.mean, hs.coverage.mean));
        }
        out.push(row);
    }
    Ok(out)
}
