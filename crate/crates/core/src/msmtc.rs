//! Multi-sensor multi-target coverage.
//!
//! Sensors sit at fixed positions and can only rotate. Targets either walk
//! to a sampled destination or take a random step each tick; circular
//! obstacles occlude the line of sight. Sensing is omnidirectional within
//! `sense_radius`, while a target only counts as covered inside a sensor's
//! field-of-view sector.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{executor_msmtc, Goal};
use crate::geometry::{
    relative_obs, visible, EnvConfig, MotionKind, Observation, Obstacle, Pose2D, StepInfo,
    StepResult, TargetState, Task, TeamEnv, Vec2,
};
use crate::math::{self, PI};
use crate::{Error, Result};

/// Rotation applied by one turn action: five degrees.
pub const ROTATION_STEP: f64 = PI / 36.0;

/// Reward when no target is covered.
pub const UNCOVERED_PENALTY: f64 = -0.1;

const PLACEMENT_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SensorAction {
    Stay,
    RotLeft,
    RotRight,
}

impl SensorAction {
    /// Lexicographic order used for tie-breaking.
    pub const ALL: [SensorAction; 3] = [SensorAction::Stay, SensorAction::RotLeft, SensorAction::RotRight];

    pub fn yaw_delta(self) -> f64 {
        match self {
            SensorAction::Stay => 0.0,
            SensorAction::RotLeft => ROTATION_STEP,
            SensorAction::RotRight => -ROTATION_STEP,
        }
    }
}

/// Full simulation truth of one coverage episode.
#[derive(Debug, Clone, PartialEq)]
pub struct MsmtcState {
    pub sensors: Vec<Pose2D>,
    pub targets: Vec<TargetState>,
    pub obstacles: Vec<Obstacle>,
    pub step_count: usize,
}

/// The coverage environment: state plus its private random stream.
#[derive(Debug, Clone)]
pub struct MsmtcEnv {
    cfg: EnvConfig,
    state: MsmtcState,
    rng: ChaCha8Rng,
}

fn uniform_point(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec2 {
    Vec2::new(rng.gen_range(lo..=hi), rng.gen_range(lo..=hi))
}

fn uniform_yaw(rng: &mut ChaCha8Rng) -> f64 {
    // (-pi, pi]
    PI - rng.gen_range(0.0..(2.0 * PI))
}

/// True iff `target` lies in the closed field-of-view sector of `sensor`
/// and is visible to it.
pub fn covered(sensor: &Pose2D, target: Vec2, obstacles: &[Obstacle], cfg: &EnvConfig) -> bool {
    if !visible(sensor, target, obstacles, cfg.sense_radius) {
        return false;
    }
    let (_, alpha) = relative_obs(sensor, target);
    alpha.abs() <= cfg.fov_halfangle
}

impl MsmtcState {
    /// Number of targets covered by at least one sensor.
    pub fn covered_count(&self, cfg: &EnvConfig) -> usize {
        self.targets
            .iter()
            .filter(|t| self.sensors.iter().any(|s| covered(s, t.position, &self.obstacles, cfg)))
            .count()
    }

    pub fn coverage_rate(&self, cfg: &EnvConfig) -> f64 {
        if self.targets.is_empty() {
            return 0.0;
        }
        self.covered_count(cfg) as f64 / self.targets.len() as f64
    }

    pub fn observation(&self, agent: usize, cfg: &EnvConfig) -> Observation {
        let n = self.sensors.len() as f64;
        let m = self.targets.len() as f64;
        let sensor = &self.sensors[agent];
        let mut rows = Vec::with_capacity(self.targets.len());
        let mut mask = Vec::with_capacity(self.targets.len());
        for (q, t) in self.targets.iter().enumerate() {
            if visible(sensor, t.position, &self.obstacles, cfg.sense_radius) {
                let (d, alpha) = relative_obs(sensor, t.position);
                rows.push([agent as f64 / n, q as f64 / m, d, alpha]);
                mask.push(true);
            } else {
                rows.push([0.0; 4]);
                mask.push(false);
            }
        }
        Observation { rows, visible: mask }
    }

    pub fn observations(&self, cfg: &EnvConfig) -> Vec<Observation> {
        (0..self.sensors.len()).map(|i| self.observation(i, cfg)).collect()
    }

    pub fn visibility(&self, cfg: &EnvConfig) -> Vec<Vec<bool>> {
        self.sensors
            .iter()
            .map(|s| {
                self.targets
                    .iter()
                    .map(|t| visible(s, t.position, &self.obstacles, cfg.sense_radius))
                    .collect()
            })
            .collect()
    }
}

/// Team reward: the coverage rate, or the penalty when nothing is covered.
pub fn msmtc_reward(state: &MsmtcState, cfg: &EnvConfig) -> f64 {
    let k = state.covered_count(cfg);
    if k == 0 {
        UNCOVERED_PENALTY
    } else {
        k as f64 / state.targets.len() as f64
    }
}

impl MsmtcEnv {
    /// Samples a fresh episode. Equal seeds give equal episodes.
    pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<(Self, Vec<Observation>)> {
        cfg.validate()?;
        if cfg.task != Task::Msmtc {
            return Err(Error::Config("coverage environment needs task=msmtc".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = cfg.arena_side;
        let sensors: Vec<Pose2D> = (0..cfg.n_agents)
            .map(|_| {
                let p = uniform_point(&mut rng, 0.0, side);
                Pose2D::at(p, uniform_yaw(&mut rng))
            })
            .collect::<Result<_>>()?;

        let mut obstacles = Vec::with_capacity(cfg.n_obstacles);
        for _ in 0..cfg.n_obstacles {
            let mut placed = None;
            for _ in 0..PLACEMENT_RETRIES {
                let radius = rng.gen_range(cfg.obstacle_radius_min..=cfg.obstacle_radius_max);
                let center = uniform_point(&mut rng, radius, side - radius);
                if sensors.iter().all(|s| s.position().distance(center) > radius) {
                    placed = Some(Obstacle { center, radius });
                    break;
                }
            }
            obstacles.push(placed.ok_or(Error::Placement("obstacle"))?);
        }

        let targets = (0..cfg.m_targets)
            .map(|_| {
                let position = uniform_point(&mut rng, 0.0, side);
                let random_walk = rng.gen_bool(cfg.random_walk_prob);
                let (motion, destination) = if random_walk {
                    (MotionKind::RandomWalk, None)
                } else {
                    (MotionKind::DestinationNav, Some(uniform_point(&mut rng, 0.0, side)))
                };
                TargetState { position, motion, destination, speed: cfg.target_speed }
            })
            .collect();

        let env = Self {
            cfg: cfg.clone(),
            state: MsmtcState { sensors, targets, obstacles, step_count: 0 },
            rng,
        };
        let obs = env.state.observations(&env.cfg);
        Ok((env, obs))
    }

    /// Builds an environment around a hand-made state (used by tests and
    /// scripted scenarios).
    pub fn from_state(cfg: &EnvConfig, state: MsmtcState, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if state.sensors.len() != cfg.n_agents || state.targets.len() != cfg.m_targets {
            return Err(Error::Invalid("state does not match configuration counts".into()));
        }
        Ok(Self { cfg: cfg.clone(), state, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn state(&self) -> &MsmtcState {
        &self.state
    }

    pub fn cfg(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn msmtc_step(&mut self, actions: &[SensorAction]) -> Result<StepResult> {
        if actions.len() != self.state.sensors.len() {
            return Err(Error::ActionCount { expected: self.state.sensors.len(), got: actions.len() });
        }
        for (s, a) in self.state.sensors.iter_mut().zip(actions) {
            s.rotate_by(a.yaw_delta());
        }
        let side = self.cfg.arena_side;
        for t in self.state.targets.iter_mut() {
            move_target(t, side, &mut self.rng);
        }
        self.state.step_count += 1;
        let reward = msmtc_reward(&self.state, &self.cfg);
        Ok(StepResult {
            observations: self.state.observations(&self.cfg),
            team_reward: reward,
            done: self.state.step_count >= self.cfg.episode_length,
            info: self.info(),
        })
    }
}

fn move_target(t: &mut TargetState, side: f64, rng: &mut ChaCha8Rng) {
    match t.motion {
        MotionKind::DestinationNav => {
            let dest = t.destination.unwrap_or(t.position);
            let delta = dest - t.position;
            let dist = delta.norm();
            if dist <= t.speed {
                t.position = dest;
                t.destination = Some(uniform_point(rng, 0.0, side));
            } else {
                t.position = t.position + delta * (t.speed / dist);
            }
        }
        MotionKind::RandomWalk => {
            let theta = rng.gen_range(0.0..(2.0 * PI));
            let step = Vec2::new(math::cos(theta), math::sin(theta)) * t.speed;
            // Direction is redrawn every tick, so clamping is the whole bounce.
            t.position = (t.position + step).clamp_to_square(side);
        }
    }
}

impl TeamEnv for MsmtcEnv {
    type Action = SensorAction;

    fn reset_episode(cfg: &EnvConfig, seed: u64) -> Result<Self> {
        Self::reset(cfg, seed).map(|(env, _)| env)
    }

    fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    fn n_agents(&self) -> usize {
        self.state.sensors.len()
    }

    fn m_targets(&self) -> usize {
        self.state.targets.len()
    }

    fn step_count(&self) -> usize {
        self.state.step_count
    }

    fn poses(&self) -> Vec<Pose2D> {
        self.state.sensors.clone()
    }

    fn observations(&self) -> Vec<Observation> {
        self.state.observations(&self.cfg)
    }

    fn relation_labels(&self) -> Vec<Vec<bool>> {
        self.state.visibility(&self.cfg)
    }

    fn act(&self, _agent: usize, obs: &Observation, goal: &Goal) -> SensorAction {
        executor_msmtc(obs, goal)
    }

    fn step(&mut self, actions: &[SensorAction]) -> Result<StepResult> {
        self.msmtc_step(actions)
    }

    fn info(&self) -> StepInfo {
        StepInfo { coverage_rate: self.state.coverage_rate(&self.cfg), collisions: 0 }
    }
}
