//! Flat `key = value` run configuration with environment and command-line
//! overrides. Precedence: command line over `TOM2C_*` variables over file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use tom2c_core::training::TrainConfig;
use tom2c_core::{EnvConfig, Task};

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "TOM2C_";

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { line: usize },
    Env(String),
    Cli,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { line } => write!(f, "line {line}"),
            Origin::Env(var) => write!(f, "environment variable {var}"),
            Origin::Cli => f.write_str("command-line override"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub origin: Origin,
}

/// Everything a run needs besides the checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    /// RL updates between periodic checkpoints.
    pub checkpoint_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { env: EnvConfig::default(), train: TrainConfig::default(), checkpoint_every: 500 }
    }
}

const ENV_KEYS: &[&str] = &[
    "task",
    "n_agents",
    "m_targets",
    "arena_side",
    "sense_radius",
    "fov_halfangle",
    "n_obstacles",
    "obstacle_radius_min",
    "obstacle_radius_max",
    "random_walk_prob",
    "target_speed",
    "high_level_period",
    "episode_length",
    "pose_visibility_radius",
    "move_step",
    "collision_diameter",
];

const TRAIN_KEYS: &[&str] = &[
    "max_steps",
    "workers",
    "update_every",
    "entropy_weight",
    "lr",
    "tom_freeze",
    "gamma_rate",
    "warmup_episodes",
    "gamma0",
    "length0",
    "cr_threshold",
    "cr_updates",
    "max_grad_norm",
];

/// Every accepted key. `seed` sets both the environment and training seed.
pub fn known_keys() -> impl Iterator<Item = &'static str> {
    ENV_KEYS.iter().chain(TRAIN_KEYS).chain(&["seed", "checkpoint_every"]).copied()
}

fn is_known(key: &str) -> bool {
    known_keys().any(|k| k == key)
}

/// Parses config text. Blank lines and `#` comments are skipped.
pub fn parse_settings(text: &str) -> CliResult<Vec<Setting>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(CliError::Config(format!("line {line}: expected key = value, got `{body}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !is_known(key) {
            return Err(CliError::Config(format!("line {line}: unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(CliError::Config(format!("line {line}: empty value for `{key}`")));
        }
        out.push(Setting { key: key.into(), value: value.into(), origin: Origin::File { line } });
    }
    Ok(out)
}

/// Settings from `TOM2C_*` variables; the suffix is the lowercased key.
pub fn env_settings(vars: impl IntoIterator<Item = (String, String)>) -> CliResult<Vec<Setting>> {
    let mut out = Vec::new();
    for (name, value) in vars {
        let Some(suffix) = name.strip_prefix(ENV_PREFIX) else { continue };
        let key = suffix.to_ascii_lowercase();
        if !is_known(&key) {
            return Err(CliError::Config(format!("environment variable {name}: unknown key `{key}`")));
        }
        out.push(Setting { key, value: value.trim().into(), origin: Origin::Env(name) });
    }
    out.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}

/// Parses `key=value` command-line overrides.
pub fn cli_settings(overrides: &[String]) -> CliResult<Vec<Setting>> {
    overrides
        .iter()
        .map(|o| {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{o}` is not key=value")))?;
            let key = key.trim();
            if !is_known(key) {
                return Err(CliError::Config(format!("command-line override: unknown key `{key}`")));
            }
            Ok(Setting { key: key.into(), value: value.trim().into(), origin: Origin::Cli })
        })
        .collect()
}

fn parse<T: FromStr>(s: &Setting) -> CliResult<T> {
    s.value
        .parse()
        .map_err(|_| CliError::Config(format!("{}: invalid value `{}` for `{}`", s.origin, s.value, s.key)))
}

impl RunConfig {
    /// Builds a config from layered settings; later layers win.
    pub fn from_layers(layers: &[Vec<Setting>]) -> CliResult<Self> {
        let mut merged: BTreeMap<&str, &Setting> = BTreeMap::new();
        for s in layers.iter().flatten() {
            merged.insert(&s.key, s);
        }
        let task = match merged.get("task") {
            Some(s) => Task::parse(&s.value)
                .ok_or_else(|| CliError::Config(format!("{}: unknown task `{}`", s.origin, s.value)))?,
            None => Task::Msmtc,
        };
        let n = merged.get("n_agents").map(|s| parse(s)).transpose()?.unwrap_or(4);
        let mut cfg = RunConfig {
            env: match task {
                Task::Msmtc => EnvConfig::coverage(n, 5),
                Task::Cn => EnvConfig::navigation(n),
            },
            ..RunConfig::default()
        };
        for s in merged.values() {
            cfg.set(s)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// File (optional), then the process environment, then `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        Self::load_over(Vec::new(), path, overrides)
    }

    /// [`RunConfig::load`] on top of `base` settings, such as a checkpoint's
    /// snapshot.
    pub fn load_over(base: Vec<Setting>, path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                parse_settings(&text)?
            }
            None => Vec::new(),
        };
        Self::from_layers(&[base, file, env_settings(std::env::vars())?, cli_settings(overrides)?])
    }

    fn set(&mut self, s: &Setting) -> CliResult<()> {
        let e = &mut self.env;
        let t = &mut self.train;
        match s.key.as_str() {
            "task" => {}
            "n_agents" => e.n_agents = parse(s)?,
            "m_targets" => e.m_targets = parse(s)?,
            "arena_side" => e.arena_side = parse(s)?,
            "sense_radius" => e.sense_radius = parse(s)?,
            "fov_halfangle" => e.fov_halfangle = parse(s)?,
            "n_obstacles" => e.n_obstacles = parse(s)?,
            "obstacle_radius_min" => e.obstacle_radius_min = parse(s)?,
            "obstacle_radius_max" => e.obstacle_radius_max = parse(s)?,
            "random_walk_prob" => e.random_walk_prob = parse(s)?,
            "target_speed" => e.target_speed = parse(s)?,
            "high_level_period" => e.high_level_period = parse(s)?,
            "episode_length" => e.episode_length = parse(s)?,
            "pose_visibility_radius" => e.pose_visibility_radius = parse(s)?,
            "move_step" => e.move_step = parse(s)?,
            "collision_diameter" => e.collision_diameter = parse(s)?,
            "max_steps" => t.max_steps = parse(s)?,
            "workers" => t.workers = parse(s)?,
            "update_every" => t.update_every = parse(s)?,
            "entropy_weight" => t.entropy_weight = parse(s)?,
            "lr" => t.lr = parse(s)?,
            "tom_freeze" => t.tom_freeze = parse(s)?,
            "gamma_rate" => t.gamma_rate = parse(s)?,
            "warmup_episodes" => t.warmup_episodes = parse(s)?,
            "gamma0" => t.gamma0 = parse(s)?,
            "length0" => t.length0 = parse(s)?,
            "cr_threshold" => t.cr_threshold = parse(s)?,
            "cr_updates" => t.cr_updates = parse(s)?,
            "max_grad_norm" => t.max_grad_norm = parse(s)?,
            "seed" => {
                let v: u64 = parse(s)?;
                e.seed = v;
                t.seed = v;
            }
            "checkpoint_every" => self.checkpoint_every = parse(s)?,
            other => return Err(CliError::Config(format!("{}: unknown key `{other}`", s.origin))),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.env.validate()?;
        self.train.validate()?;
        if self.checkpoint_every == 0 {
            return Err(CliError::Config("checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    /// Every key with its current value, in the file syntax.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let e = &self.env;
        let t = &self.train;
        vec![
            ("task", e.task.name().to_string()),
            ("n_agents", e.n_agents.to_string()),
            ("m_targets", e.m_targets.to_string()),
            ("arena_side", e.arena_side.to_string()),
            ("sense_radius", e.sense_radius.to_string()),
            ("fov_halfangle", e.fov_halfangle.to_string()),
            ("n_obstacles", e.n_obstacles.to_string()),
            ("obstacle_radius_min", e.obstacle_radius_min.to_string()),
            ("obstacle_radius_max", e.obstacle_radius_max.to_string()),
            ("random_walk_prob", e.random_walk_prob.to_string()),
            ("target_speed", e.target_speed.to_string()),
            ("high_level_period", e.high_level_period.to_string()),
            ("episode_length", e.episode_length.to_string()),
            ("pose_visibility_radius", e.pose_visibility_radius.to_string()),
            ("move_step", e.move_step.to_string()),
            ("collision_diameter", e.collision_diameter.to_string()),
            ("max_steps", t.max_steps.to_string()),
            ("workers", t.workers.to_string()),
            ("update_every", t.update_every.to_string()),
            ("entropy_weight", t.entropy_weight.to_string()),
            ("lr", t.lr.to_string()),
            ("tom_freeze", t.tom_freeze.to_string()),
            ("gamma_rate", t.gamma_rate.to_string()),
            ("warmup_episodes", t.warmup_episodes.to_string()),
            ("gamma0", t.gamma0.to_string()),
            ("length0", t.length0.to_string()),
            ("cr_threshold", t.cr_threshold.to_string()),
            ("cr_updates", t.cr_updates.to_string()),
            ("max_grad_norm", t.max_grad_norm.to_string()),
            ("seed", t.seed.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
