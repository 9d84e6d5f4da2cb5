//! Cooperative navigation: `n` agents spread over `n` static landmarks.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{executor_cn, Goal};
use crate::geometry::{
    relative_obs, EnvConfig, Observation, Pose2D, StepInfo, StepResult, Task, TeamEnv, Vec2,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MoveAction {
    Up,
    Down,
    Left,
    Right,
}

impl MoveAction {
    pub const ALL: [MoveAction; 4] = [MoveAction::Up, MoveAction::Down, MoveAction::Left, MoveAction::Right];

    pub fn direction(self) -> Vec2 {
        match self {
            MoveAction::Up => Vec2::new(0.0, 1.0),
            MoveAction::Down => Vec2::new(0.0, -1.0),
            MoveAction::Left => Vec2::new(-1.0, 0.0),
            MoveAction::Right => Vec2::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub position: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnState {
    pub agents: Vec<Body>,
    pub landmarks: Vec<Vec2>,
    pub step_count: usize,
}

/// Flat per-agent vector: self position and velocity, every other agent's
/// position and velocity (zeroed beyond `pose_visibility_radius`), then
/// every landmark position (zeroed beyond `sense_radius`).
#[derive(Debug, Clone, PartialEq)]
pub struct CnObservation(pub Vec<f64>);

impl CnObservation {
    pub fn expected_len(n: usize) -> usize {
        4 + 4 * (n - 1) + 2 * n
    }
}

/// Number of unordered pairs closer than the collision diameter.
pub fn collision_count(state: &CnState, diameter: f64) -> usize {
    let a = &state.agents;
    let mut hits = 0;
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            if a[i].position.distance(a[j].position) < diameter {
                hits += 1;
            }
        }
    }
    hits
}

/// Negative summed landmark-to-nearest-agent distance minus one per
/// colliding pair.
pub fn cn_reward(state: &CnState, cfg: &EnvConfig) -> f64 {
    let spread: f64 = state
        .landmarks
        .iter()
        .map(|l| {
            state
                .agents
                .iter()
                .map(|a| a.position.distance(*l))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    -spread - collision_count(state, cfg.collision_diameter) as f64
}

impl CnState {
    pub fn observation(&self, agent: usize, cfg: &EnvConfig) -> CnObservation {
        let me = self.agents[agent];
        let mut v = Vec::with_capacity(CnObservation::expected_len(self.agents.len()));
        v.extend([me.position.x, me.position.y, me.velocity.x, me.velocity.y]);
        for (j, other) in self.agents.iter().enumerate() {
            if j == agent {
                continue;
            }
            if me.position.distance(other.position) <= cfg.pose_visibility_radius {
                v.extend([other.position.x, other.position.y, other.velocity.x, other.velocity.y]);
            } else {
                v.extend([0.0; 4]);
            }
        }
        for l in &self.landmarks {
            if me.position.distance(*l) <= cfg.sense_radius {
                v.extend([l.x, l.y]);
            } else {
                v.extend([0.0; 2]);
            }
        }
        CnObservation(v)
    }

    /// Landmark-relation rows in the same layout the coverage task uses.
    pub fn target_rows(&self, agent: usize, cfg: &EnvConfig) -> Observation {
        let n = self.agents.len() as f64;
        let m = self.landmarks.len() as f64;
        let pose = self.pose(agent);
        let mut rows = Vec::with_capacity(self.landmarks.len());
        let mut mask = Vec::with_capacity(self.landmarks.len());
        for (q, l) in self.landmarks.iter().enumerate() {
            let (d, alpha) = relative_obs(&pose, *l);
            if d <= cfg.sense_radius {
                rows.push([agent as f64 / n, q as f64 / m, d, alpha]);
                mask.push(true);
            } else {
                rows.push([0.0; 4]);
                mask.push(false);
            }
        }
        Observation { rows, visible: mask }
    }

    pub fn pose(&self, agent: usize) -> Pose2D {
        let p = self.agents[agent].position;
        // Positions are clamped into the arena, so they stay finite.
        Pose2D::at(p, 0.0).unwrap_or_else(|_| unreachable!())
    }

    /// Index of the landmark closest to `agent`; lowest index on ties.
    pub fn nearest_landmark(&self, agent: usize) -> usize {
        let p = self.agents[agent].position;
        let mut best = (0, f64::INFINITY);
        for (q, l) in self.landmarks.iter().enumerate() {
            let d = p.distance(*l);
            if d < best.1 {
                best = (q, d);
            }
        }
        best.0
    }

    pub fn occupied_fraction(&self, diameter: f64) -> f64 {
        let hit = self
            .landmarks
            .iter()
            .filter(|l| self.agents.iter().any(|a| a.position.distance(**l) < diameter))
            .count();
        hit as f64 / self.landmarks.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct CnEnv {
    cfg: EnvConfig,
    state: CnState,
}

impl CnEnv {
    /// Places agents (at rest) and landmarks uniformly at random.
    pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<(Self, Vec<CnObservation>)> {
        cfg.validate()?;
        if cfg.task != Task::Cn {
            return Err(Error::Config("navigation environment needs task=cn".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = cfg.arena_side;
        let mut point = || Vec2::new(rng.gen_range(0.0..=side), rng.gen_range(0.0..=side));
        let agents = (0..cfg.n_agents)
            .map(|_| Body { position: point(), velocity: Vec2::ZERO })
            .collect();
        let landmarks = (0..cfg.m_targets).map(|_| point()).collect();
        let env = Self { cfg: cfg.clone(), state: CnState { agents, landmarks, step_count: 0 } };
        let obs = env.cn_observations();
        Ok((env, obs))
    }

    pub fn from_state(cfg: &EnvConfig, state: CnState) -> Result<Self> {
        cfg.validate()?;
        if state.agents.len() != cfg.n_agents || state.landmarks.len() != cfg.m_targets {
            return Err(Error::Invalid("state does not match configuration counts".into()));
        }
        Ok(Self { cfg: cfg.clone(), state })
    }

    pub fn state(&self) -> &CnState {
        &self.state
    }

    pub fn cn_observations(&self) -> Vec<CnObservation> {
        (0..self.state.agents.len()).map(|i| self.state.observation(i, &self.cfg)).collect()
    }

    pub fn cn_step(&mut self, actions: &[MoveAction]) -> Result<StepResult<CnObservation>> {
        if actions.len() != self.state.agents.len() {
            return Err(Error::ActionCount { expected: self.state.agents.len(), got: actions.len() });
        }
        let side = self.cfg.arena_side;
        for (body, a) in self.state.agents.iter_mut().zip(actions) {
            body.velocity = a.direction() * self.cfg.move_step;
            body.position = (body.position + body.velocity).clamp_to_square(side);
        }
        self.state.step_count += 1;
        Ok(StepResult {
            observations: self.cn_observations(),
            team_reward: cn_reward(&self.state, &self.cfg),
            done: self.state.step_count >= self.cfg.episode_length,
            info: self.info(),
        })
    }
}

impl TeamEnv for CnEnv {
    type Action = MoveAction;

    fn reset_episode(cfg: &EnvConfig, seed: u64) -> Result<Self> {
        Self::reset(cfg, seed).map(|(env, _)| env)
    }

    fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    fn n_agents(&self) -> usize {
        self.state.agents.len()
    }

    fn m_targets(&self) -> usize {
        self.state.landmarks.len()
    }

    fn step_count(&self) -> usize {
        self.state.step_count
    }

    fn poses(&self) -> Vec<Pose2D> {
        (0..self.state.agents.len()).map(|i| self.state.pose(i)).collect()
    }

    fn observations(&self) -> Vec<Observation> {
        (0..self.state.agents.len()).map(|i| self.state.target_rows(i, &self.cfg)).collect()
    }

    fn relation_labels(&self) -> Vec<Vec<bool>> {
        let m = self.state.landmarks.len();
        (0..self.state.agents.len())
            .map(|i| {
                let near = self.state.nearest_landmark(i);
                (0..m).map(|q| q == near).collect()
            })
            .collect()
    }

    fn act(&self, _agent: usize, obs: &Observation, goal: &Goal) -> MoveAction {
        executor_cn(obs, goal)
    }

    fn step(&mut self, actions: &[MoveAction]) -> Result<StepResult> {
        let r = self.cn_step(actions)?;
        Ok(StepResult {
            observations: self.observations(),
            team_reward: r.team_reward,
            done: r.done,
            info: r.info,
        })
    }

    fn info(&self) -> StepInfo {
        StepInfo {
            coverage_rate: self.state.occupied_fraction(self.cfg.collision_diameter),
            collisions: collision_count(&self.state, self.cfg.collision_diameter),
        }
    }
}
