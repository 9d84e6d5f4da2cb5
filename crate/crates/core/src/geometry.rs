//! Shared 2D geometry, scene types and the contract both environments follow.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Sub};

use crate::agent::Goal;
use crate::math::{self, PI, TAU};
use crate::{Error, Result};

/// A point or displacement in arena units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        math::hypot(self.x, self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates counter-clockwise by `theta` radians.
    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = (math::sin(theta), math::cos(theta));
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn clamp_to_square(self, side: f64) -> Vec2 {
        Vec2::new(self.x.clamp(0.0, side), self.y.clamp(0.0, side))
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Maps any finite angle onto its representative in (-π, π].
pub fn normalize_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("normalize_angle"));
    }
    Ok(wrap(theta))
}

/// Unchecked form of [`normalize_angle`] for values already known finite.
pub(crate) fn wrap(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut r = math::fmod(theta + PI, TAU);
    if r <= 0.0 {
        r += TAU;
    }
    r - PI
}

/// Agent pose on the plane; `yaw` is kept in (-π, π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    yaw: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite("pose position"));
        }
        Ok(Self { x, y, yaw: normalize_angle(yaw)? })
    }

    pub fn at(position: Vec2, yaw: f64) -> Result<Self> {
        Self::new(position.x, position.y, yaw)
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Adds `delta` to the heading and re-normalizes.
    pub fn rotate_by(&mut self, delta: f64) {
        self.yaw = wrap(self.yaw + delta);
    }

    /// Expresses `other` in this pose's body frame: (dx, dy, relative yaw).
    pub fn relative(&self, other: &Pose2D) -> (Vec2, f64) {
        let d = (other.position() - self.position()).rotate(-self.yaw);
        (d, wrap(other.yaw - self.yaw))
    }
}

/// Distance and body-frame bearing from `agent` to `target`.
pub fn relative_obs(agent: &Pose2D, target: Vec2) -> (f64, f64) {
    let delta = target - agent.position();
    let d = delta.norm();
    let alpha = wrap(math::atan2(delta.y, delta.x) - agent.yaw);
    (d, alpha)
}

/// A static circular occluder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
}

/// Distance from `point` to the closed segment `p`-`q`.
pub fn point_segment_distance(point: Vec2, p: Vec2, q: Vec2) -> f64 {
    let seg = q - p;
    let len2 = seg.dot(seg);
    if len2 == 0.0 {
        return point.distance(p);
    }
    let t = ((point - p).dot(seg) / len2).clamp(0.0, 1.0);
    point.distance(p + seg * t)
}

/// True iff the closed segment `p`-`q` meets the closed disk of `obs`.
pub fn segment_blocked(p: Vec2, q: Vec2, obs: &Obstacle) -> bool {
    point_segment_distance(obs.center, p, q) <= obs.radius
}

/// Radius-and-occlusion visibility; heading plays no role.
pub fn visible(agent: &Pose2D, target: Vec2, obstacles: &[Obstacle], sense_radius: f64) -> bool {
    let from = agent.position();
    if from.distance(target) > sense_radius {
        return false;
    }
    !obstacles.iter().any(|o| segment_blocked(from, target, o))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    DestinationNav,
    RandomWalk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub position: Vec2,
    pub motion: MotionKind,
    /// Present iff `motion` is [`MotionKind::DestinationNav`].
    pub destination: Option<Vec2>,
    pub speed: f64,
}

/// Which benchmark an [`EnvConfig`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Multi-sensor multi-target coverage.
    Msmtc,
    /// Cooperative navigation.
    Cn,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Msmtc => "msmtc",
            Task::Cn => "cn",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "msmtc" => Some(Task::Msmtc),
            "cn" => Some(Task::Cn),
            _ => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Environment parameters. Distances are in arena units, angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub task: Task,
    pub n_agents: usize,
    /// Targets (coverage) or landmarks (navigation). Navigation forces `m = n`.
    pub m_targets: usize,
    pub arena_side: f64,
    pub sense_radius: f64,
    pub fov_halfangle: f64,
    pub n_obstacles: usize,
    pub obstacle_radius_min: f64,
    pub obstacle_radius_max: f64,
    pub random_walk_prob: f64,
    pub target_speed: f64,
    /// Low-level steps per high-level decision (K).
    pub high_level_period: usize,
    /// Low-level steps per episode (L).
    pub episode_length: usize,
    pub pose_visibility_radius: f64,
    pub move_step: f64,
    pub collision_diameter: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::coverage(4, 5)
    }
}

impl EnvConfig {
    /// Coverage defaults for `n` sensors and `m` targets.
    pub fn coverage(n: usize, m: usize) -> Self {
        Self {
            task: Task::Msmtc,
            n_agents: n,
            m_targets: m,
            arena_side: 1.0,
            sense_radius: 0.6,
            fov_halfangle: PI / 4.0,
            n_obstacles: 2,
            obstacle_radius_min: 0.05,
            obstacle_radius_max: 0.15,
            random_walk_prob: 0.5,
            target_speed: 0.01,
            high_level_period: 10,
            episode_length: 100,
            pose_visibility_radius: f64::INFINITY,
            move_step: 0.05,
            collision_diameter: 0.1,
            seed: 0,
        }
    }

    /// Navigation defaults for `n` agents and `n` landmarks.
    pub fn navigation(n: usize) -> Self {
        Self {
            task: Task::Cn,
            m_targets: n,
            sense_radius: f64::INFINITY,
            n_obstacles: 0,
            ..Self::coverage(n, n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.n_agents == 0 || self.m_targets == 0 {
            return bad("n_agents and m_targets must be positive");
        }
        if self.task == Task::Cn && self.m_targets != self.n_agents {
            return bad("cooperative navigation needs m_targets == n_agents");
        }
        if self.high_level_period == 0 || self.episode_length == 0 {
            return bad("high_level_period and episode_length must be positive");
        }
        let positive = [
            ("arena_side", self.arena_side),
            ("sense_radius", self.sense_radius),
            ("fov_halfangle", self.fov_halfangle),
            ("pose_visibility_radius", self.pose_visibility_radius),
            ("move_step", self.move_step),
            ("collision_diameter", self.collision_diameter),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.arena_side.is_finite() {
            return bad("arena_side must be finite");
        }
        if self.fov_halfangle > PI {
            return bad("fov_halfangle must not exceed pi");
        }
        if !(0.0..=1.0).contains(&self.random_walk_prob) {
            return bad("random_walk_prob must lie in [0, 1]");
        }
        if !(self.target_speed >= 0.0 && self.target_speed.is_finite()) {
            return bad("target_speed must be finite and nonnegative");
        }
        if self.n_obstacles > 0 {
            let (lo, hi) = (self.obstacle_radius_min, self.obstacle_radius_max);
            if !(lo > 0.0 && hi >= lo && 2.0 * hi < self.arena_side) {
                return bad("obstacle radii must satisfy 0 < min <= max < arena_side / 2");
            }
        }
        Ok(())
    }

    /// High-level decisions per episode (`ceil(L / K)`).
    pub fn decisions_per_episode(&self) -> usize {
        self.episode_length.div_ceil(self.high_level_period)
    }
}

/// One agent's view of the targets: `m` rows of `(i/n, q/m, d, alpha)`.
///
/// Invisible targets are all-zero rows; `visible` carries the mask
/// explicitly so a visible target at the origin row is never mistaken for
/// an invisible one.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub rows: Vec<[f64; 4]>,
    pub visible: Vec<bool>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|v| **v).count()
    }
}

/// Diagnostics attached to every low-level step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    /// Fraction of targets covered (coverage task) or of landmarks occupied
    /// within the collision diameter (navigation).
    pub coverage_rate: f64,
    pub collisions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<O = Observation> {
    pub observations: Vec<O>,
    pub team_reward: f64,
    /// True iff the step counter reached the episode length.
    pub done: bool,
    pub info: StepInfo,
}

/// The surface the agent pipeline, trainer and evaluator drive.
pub trait TeamEnv: Sized {
    type Action: Copy + fmt::Debug + PartialEq;

    fn reset_episode(cfg: &EnvConfig, seed: u64) -> Result<Self>;
    fn config(&self) -> &EnvConfig;
    fn n_agents(&self) -> usize;
    fn m_targets(&self) -> usize;
    fn step_count(&self) -> usize;
    fn poses(&self) -> Vec<Pose2D>;
    /// Target-relation rows for every agent.
    fn observations(&self) -> Vec<Observation>;
    /// Ground-truth relation labels `c_j`: visibility (coverage) or
    /// nearest-landmark one-hot (navigation).
    fn relation_labels(&self) -> Vec<Vec<bool>>;
    /// Rule-based low-level executor.
    fn act(&self, agent: usize, obs: &Observation, goal: &Goal) -> Self::Action;
    fn step(&mut self, actions: &[Self::Action]) -> Result<StepResult>;
    /// Diagnostics of the current state without stepping.
    fn info(&self) -> StepInfo;
}
