//! Line-oriented episode replays.
//!
//! ```text
//! tom2c-replay 1 task=msmtc n=2 m=2 arena=1 sense=0.6 fov=0.785...
//! obstacles 0.3,0.4,0.1 0.7,0.2,0.05
//! step=1 coverage=0.5 reward=0.5 agents=x,y,yaw;x,y,yaw targets=x,y;x,y comm=0>1
//! ```
//!
//! `comm=` is empty on steps without messages.

use std::fmt::Write as _;

use tom2c_core::geometry::{Obstacle, Pose2D, Vec2};
use tom2c_core::metrics::Frame;
use tom2c_core::{EnvConfig, Task};

use crate::error::{CliError, CliResult};

const HEADER: &str = "tom2c-replay";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneInfo {
    pub task: Task,
    pub arena_side: f64,
    pub sense_radius: f64,
    pub fov_halfangle: f64,
}

impl SceneInfo {
    pub fn of(cfg: &EnvConfig) -> Self {
        Self {
            task: cfg.task,
            arena_side: cfg.arena_side,
            sense_radius: cfg.sense_radius,
            fov_halfangle: cfg.fov_halfangle,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub scene: SceneInfo,
    pub obstacles: Vec<Obstacle>,
    pub frames: Vec<Frame>,
}

impl Replay {
    pub fn new(cfg: &EnvConfig, frames: Vec<Frame>) -> Self {
        let obstacles = frames.first().map(|f| f.obstacles.clone()).unwrap_or_default();
        Self { scene: SceneInfo::of(cfg), obstacles, frames }
    }

    pub fn to_text(&self) -> String {
        let s = &self.scene;
        let (n, m) = self.frames.first().map(|f| (f.agents.len(), f.targets.len())).unwrap_or((0, 0));
        let mut out = format!(
            "{HEADER} {VERSION} task={} n={n} m={m} arena={} sense={} fov={}\nobstacles",
            s.task, s.arena_side, s.sense_radius, s.fov_halfangle
        );
        for o in &self.obstacles {
            let _ = write!(out, " {},{},{}", o.center.x, o.center.y, o.radius);
        }
        out.push('\n');
        for f in &self.frames {
            let agents: Vec<String> = f.agents.iter().map(|p| format!("{},{},{}", p.position().x, p.position().y, p.yaw())).collect();
            let targets: Vec<String> = f.targets.iter().map(|t| format!("{},{}", t.x, t.y)).collect();
            let comm: Vec<String> = f.comm.iter().map(|(s, r)| format!("{s}>{r}")).collect();
            let _ = writeln!(
                out,
                "step={} coverage={} reward={} agents={} targets={} comm={}",
                f.step,
                f.coverage,
                f.reward,
                agents.join(";"),
                targets.join(";"),
                comm.join(",")
            );
        }
        out
    }

    /// Parses replay text; errors name the 1-based line.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| malformed(1, "empty replay"))?;
        let mut words = header.split_whitespace();
        if words.next() != Some(HEADER) {
            return Err(malformed(1, "missing replay header"));
        }
        if words.next() != Some("1") {
            return Err(malformed(1, "unsupported replay version"));
        }
        let fields = key_values(1, words)?;
        let get = |k: &str| fields.iter().find(|(key, _)| *key == k).map(|(_, v)| *v).ok_or_else(|| malformed(1, &format!("missing {k}")));
        let task = Task::parse(get("task")?).ok_or_else(|| malformed(1, "unknown task"))?;
        let (n, m): (usize, usize) = (num(1, get("n")?)?, num(1, get("m")?)?);
        let scene = SceneInfo {
            task,
            arena_side: num(1, get("arena")?)?,
            sense_radius: num(1, get("sense")?)?,
            fov_halfangle: num(1, get("fov")?)?,
        };

        let (line, obs) = lines.next().ok_or_else(|| malformed(2, "missing obstacles line"))?;
        let mut words = obs.split_whitespace();
        if words.next() != Some("obstacles") {
            return Err(malformed(line, "expected obstacles line"));
        }
        let obstacles = words
            .map(|w| {
                let v = floats(line, w, 3)?;
                Ok(Obstacle { center: Vec2::new(v[0], v[1]), radius: v[2] })
            })
            .collect::<CliResult<Vec<_>>>()?;

        let mut frames = Vec::new();
        for (line, text) in lines {
            if text.trim().is_empty() {
                continue;
            }
            let fields = key_values(line, text.split_whitespace())?;
            let get = |k: &str| fields.iter().find(|(key, _)| *key == k).map(|(_, v)| *v).ok_or_else(|| malformed(line, &format!("missing {k}")));
            let agents = list(get("agents")?, ';', |w| {
                let v = floats(line, w, 3)?;
                Pose2D::new(v[0], v[1], v[2]).map_err(|e| malformed(line, &e.to_string()))
            })?;
            let targets = list(get("targets")?, ';', |w| {
                let v = floats(line, w, 2)?;
                Ok(Vec2::new(v[0], v[1]))
            })?;
            let comm = list(get("comm")?, ',', |w| {
                let (s, r) = w.split_once('>').ok_or_else(|| malformed(line, "comm entries are sender>receiver"))?;
                let (s, r): (usize, usize) = (num(line, s)?, num(line, r)?);
                if s >= n || r >= n || s == r {
                    return Err(malformed(line, "comm entry names an unknown agent"));
                }
                Ok((s, r))
            })?;
            if agents.len() != n || targets.len() != m {
                return Err(malformed(line, "agent or target count differs from the header"));
            }
            frames.push(Frame {
                step: num(line, get("step")?)?,
                coverage: num(line, get("coverage")?)?,
                reward: num(line, get("reward")?)?,
                agents,
                targets,
                obstacles: obstacles.clone(),
                comm,
            });
        }
        Ok(Self { scene, obstacles, frames })
    }
}

fn malformed(line: usize, what: &str) -> CliError {
    CliError::Runtime(format!("replay line {line}: {what}"))
}

fn key_values<'a>(line: usize, words: impl Iterator<Item = &'a str>) -> CliResult<Vec<(&'a str, &'a str)>> {
    words.map(|w| w.split_once('=').ok_or_else(|| malformed(line, &format!("expected key=value, got `{w}`")))).collect()
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> CliResult<T> {
    s.parse().map_err(|_| malformed(line, &format!("bad number `{s}`")))
}

fn floats(line: usize, s: &str, count: usize) -> CliResult<Vec<f64>> {
    let v = s.split(',').map(|x| num(line, x)).collect::<CliResult<Vec<f64>>>()?;
    if v.len() != count || v.iter().any(|x| x.is_nan()) {
        return Err(malformed(line, &format!("expected {count} numbers in `{s}`")));
    }
    Ok(v)
}

fn list<T>(s: &str, sep: char, f: impl Fn(&str) -> CliResult<T>) -> CliResult<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(sep).map(f).collect()
}
