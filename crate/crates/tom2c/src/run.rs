//! Parallel collection and evaluation, the training loop, and the files each
//! subcommand writes.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tom2c_core::agent::{DecideMode, ModelConfig, Tom2cModel};
use tom2c_core::cn::CnEnv;
use tom2c_core::metrics::{
    coverage_ratio, episode_seed, record_episode, run_episode, EvalReport, Policy, HEURISTIC_MAX_AGENTS,
};
use tom2c_core::msmtc::MsmtcEnv;
use tom2c_core::training::{GoalSource, RolloutBatch, Trainer, UpdateStats, Worker};
use tom2c_core::{EnvConfig, Task, TeamEnv};

use crate::checkpoint::{write_atomic, Checkpoint};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::replay::Replay;

/// One synchronous collection round: every worker runs `decisions` steps
/// against the same parameter snapshot.
pub fn collect_parallel<E: TeamEnv + Send>(
    workers: &mut [Worker<E>],
    model: &Tom2cModel,
    decisions: usize,
    source: GoalSource,
    pose_radius: f64,
) -> CliResult<RolloutBatch> {
    let segments = workers
        .par_iter_mut()
        .map(|w| {
            w.collect(model, decisions, source, pose_radius)
                .map_err(|e| CliError::Runtime(format!("worker {}: {e}", w.id)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(RolloutBatch { segments, pose_radius })
}

/// [`tom2c_core::metrics::eval_policy`] with episodes spread over threads.
/// Results equal the sequential evaluator's.
pub fn eval_parallel(
    policy: Policy,
    cfg: &EnvConfig,
    episodes: usize,
    base_seed: u64,
    pose_radius: f64,
) -> CliResult<EvalReport> {
    if episodes == 0 {
        return Err(CliError::Config("episodes must be positive".into()));
    }
    let stats = (0..episodes)
        .into_par_iter()
        .map(|k| run_episode(policy, cfg, episode_seed(base_seed, k), pose_radius))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_episodes(&stats)?)
}

/// Coverage ratio to the heuristic for every (sensors, targets) cell.
pub fn grid_parallel(
    policy: Policy,
    base: &EnvConfig,
    agents: &[usize],
    targets: &[usize],
    episodes: usize,
    seed: u64,
) -> CliResult<Vec<Vec<f64>>> {
    if base.task != Task::Msmtc {
        return Err(CliError::Config("the scalability grid uses the coverage task".into()));
    }
    if let Some(p) = agents.iter().find(|p| **p > HEURISTIC_MAX_AGENTS) {
        return Err(CliError::Config(format!("{p} sensors exceed the exhaustive-search bound {HEURISTIC_MAX_AGENTS}")));
    }
    agents
        .iter()
        .map(|&p| {
            targets
                .iter()
                .map(|&q| {
                    let cfg = EnvConfig { n_agents: p, m_targets: q, ..base.clone() };
                    let hs = eval_parallel(Policy::Heuristic, &cfg, episodes, seed, f64::INFINITY)?;
                    let own = eval_parallel(policy, &cfg, episodes, seed, f64::INFINITY)?;
                    Ok(coverage_ratio(own.coverage.mean, hs.coverage.mean))
                })
                .collect()
        })
        .collect()
}

pub fn grid_csv(agents: &[usize], targets: &[usize], ratios: &[Vec<f64>]) -> String {
    let mut s = String::from("sensors\\targets");
    for q in targets {
        s.push_str(&format!(",{q}"));
    }
    s.push('\n');
    for (p, row) in agents.iter().zip(ratios) {
        s.push_str(&p.to_string());
        for r in row {
            s.push_str(&format!(",{r:.6}"));
        }
        s.push('\n');
    }
    s
}

pub const METRICS_HEADER: &str =
    "step,episode,gamma,L,mean_reward,coverage,L_GI,L_OE,L_CR,mean_edges,mean_bandwidth,tom_gi_acc,tom_oe_acc";

/// One metrics CSV line. Loss columns are empty when that loss did not run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// RL updates so far; not written to the CSV.
    pub updates: u64,
    pub step: u64,
    pub episode: u64,
    pub gamma: f64,
    pub length: usize,
    pub stats: UpdateStats,
    pub cr_loss: Option<f64>,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let s = &self.stats;
        format!(
            "{},{},{:.6},{},{:.6},{:.6},{},{},{},{:.4},{:.4},{:.4},{:.4}",
            self.step,
            self.episode,
            self.gamma,
            self.length,
            s.mean_reward,
            s.coverage,
            opt(s.tom.map(|t| t.0)),
            opt(s.tom.map(|t| t.1)),
            opt(self.cr_loss),
            s.mean_edges,
            s.mean_bandwidth,
            s.gi_acc,
            s.oe_acc
        )
    }
}

/// Run directory manifest, rewritten atomically whenever an artifact appears.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub code_version: String,
    pub started_unix: u64,
    pub updated_unix: u64,
    pub resumed_from: Option<String>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(run: &RunConfig, resumed_from: Option<&Path>) -> Self {
        let now = unix_now();
        Self {
            config: run.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            seed: run.train.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now,
            updated_unix: now,
            resumed_from: resumed_from.map(|p| p.display().to_string()),
            artifacts: Vec::new(),
        }
    }

    pub fn add(&mut self, artifact: &str) {
        if !self.artifacts.iter().any(|a| a == artifact) {
            self.artifacts.push(artifact.to_string());
        }
    }

    pub fn save(&mut self, dir: &Path) -> CliResult<()> {
        self.updated_unix = unix_now();
        let json = serde_json::to_vec_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_atomic(&dir.join(MANIFEST), &json)
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }
}

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.csv";
pub const CONFIG_SNAPSHOT: &str = "config.txt";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn checkpoint_name(rl_updates: u64) -> String {
    format!("{CHECKPOINT_DIR}/ckpt-{rl_updates:08}.bin")
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    /// Checkpoint paths written by this call, oldest first.
    pub checkpoints: Vec<PathBuf>,
    pub metrics: PathBuf,
}

struct RunFiles {
    dir: PathBuf,
    manifest: RunManifest,
    metrics: fs::File,
    checkpoints: Vec<PathBuf>,
}

impl RunFiles {
    fn open(dir: &Path, run: &RunConfig, resumed_from: Option<&Path>) -> CliResult<Self> {
        fs::create_dir_all(dir.join(CHECKPOINT_DIR)).map_err(|e| CliError::io(dir, e))?;
        let mut manifest = match resumed_from {
            Some(_) => RunManifest::load(dir).unwrap_or_else(|_| RunManifest::new(run, resumed_from)),
            None => RunManifest::new(run, None),
        };
        manifest.resumed_from = resumed_from.map(|p| p.display().to_string()).or(manifest.resumed_from);
        manifest.config = RunManifest::new(run, None).config;
        let snapshot = dir.join(CONFIG_SNAPSHOT);
        write_atomic(&snapshot, run.to_text().as_bytes())?;
        let metrics_path = dir.join(METRICS);
        let fresh = resumed_from.is_none() || !metrics_path.exists();
        let mut metrics = OpenOptions::new()
            .create(true)
            .write(true)
            .append(!fresh)
            .truncate(fresh)
            .open(&metrics_path)
            .map_err(|e| CliError::io(&metrics_path, e))?;
        if fresh {
            writeln!(metrics, "{METRICS_HEADER}").map_err(|e| CliError::io(&metrics_path, e))?;
        }
        manifest.add(CONFIG_SNAPSHOT);
        manifest.add(METRICS);
        manifest.save(dir)?;
        Ok(Self { dir: dir.to_path_buf(), manifest, metrics, checkpoints: Vec::new() })
    }

    fn row(&mut self, row: &MetricsRow) -> CliResult<()> {
        writeln!(self.metrics, "{}", row.to_csv()).map_err(|e| CliError::io(self.dir.join(METRICS), e))
    }

    fn checkpoint(&mut self, trainer: &Trainer, run: &RunConfig) -> CliResult<()> {
        let name = checkpoint_name(trainer.counters.rl_updates);
        let path = self.dir.join(&name);
        if self.checkpoints.last() == Some(&path) {
            return Ok(());
        }
        Checkpoint::from_trainer(trainer, run).save(&path)?;
        self.metrics.flush().map_err(|e| CliError::io(self.dir.join(METRICS), e))?;
        self.manifest.add(&name);
        self.manifest.save(&self.dir)?;
        self.checkpoints.push(path);
        Ok(())
    }
}

/// Trains until `max_steps` environment steps, then runs `cr_updates`
/// communication-reduction updates. `resume` continues its counters,
/// weights and optimizer moments. `progress` sees every metrics row.
pub fn train(
    run: &RunConfig,
    dir: &Path,
    resume: Option<(&Path, &Checkpoint)>,
    progress: &mut dyn FnMut(&MetricsRow),
) -> CliResult<TrainOutcome> {
    run.validate()?;
    let trainer = match resume {
        Some((_, ckpt)) => {
            let t = ckpt.trainer(run)?;
            if t.model.config.task != run.env.task {
                return Err(CliError::Config("checkpoint task differs from the configured task".into()));
            }
            t
        }
        None => {
            let model = Tom2cModel::new(ModelConfig::new(run.env.task), run.train.seed)?;
            Trainer::new(run.train.clone(), model)?
        }
    };
    let files = RunFiles::open(dir, run, resume.map(|(p, _)| p))?;
    match run.env.task {
        Task::Msmtc => train_on::<MsmtcEnv>(run, trainer, files, progress),
        Task::Cn => train_on::<CnEnv>(run, trainer, files, progress),
    }
}

fn train_on<E: TeamEnv + Send>(
    run: &RunConfig,
    mut trainer: Trainer,
    mut files: RunFiles,
    progress: &mut dyn FnMut(&MetricsRow),
) -> CliResult<TrainOutcome> {
    let pose_radius = run.env.pose_visibility_radius;
    let decisions = run.train.decisions_per_update(run.env.high_level_period);
    let mut env_cfg = run.env.clone();
    env_cfg.episode_length = trainer.episode_length();
    let worker_seed = run.train.seed ^ trainer.counters.rl_updates.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut workers = (0..run.train.workers)
        .map(|i| Worker::<E>::new(i, &env_cfg, worker_seed, &trainer.model))
        .collect::<Result<Vec<_>, _>>()?;
    let source = GoalSource::Policy(DecideMode::Sample);

    if trainer.counters.rl_updates == 0 {
        files.checkpoint(&trainer, run)?;
    }
    while !trainer.finished() {
        let length = trainer.episode_length();
        workers.iter_mut().for_each(|w| w.set_episode_length(length));
        let batch = collect_parallel(&mut workers, &trainer.model, decisions, source, pose_radius)?;
        let stats = trainer.apply(batch)?;
        let row = MetricsRow {
            updates: trainer.counters.rl_updates,
            step: trainer.counters.env_steps,
            episode: trainer.counters.episodes,
            gamma: trainer.gamma(),
            length: trainer.episode_length(),
            stats,
            cr_loss: None,
        };
        files.row(&row)?;
        progress(&row);
        if trainer.counters.rl_updates % run.checkpoint_every == 0 {
            files.checkpoint(&trainer, run)?;
        }
    }
    for _ in 0..run.train.cr_updates {
        let batch = collect_parallel(&mut workers, &trainer.model, decisions, source, pose_radius)?;
        trainer.counters.env_steps += batch.env_steps() as u64;
        let mut stats = tom2c_core::training::summarize(&batch);
        let loss = trainer.cr_update(&batch)?;
        stats.tom = None;
        let row = MetricsRow {
            updates: trainer.counters.rl_updates,
            step: trainer.counters.env_steps,
            episode: trainer.counters.episodes,
            gamma: trainer.gamma(),
            length: trainer.episode_length(),
            stats,
            cr_loss: loss,
        };
        files.row(&row)?;
        progress(&row);
    }
    files.checkpoint(&trainer, run)?;
    let metrics = files.dir.join(METRICS);
    Ok(TrainOutcome { trainer, checkpoints: files.checkpoints, metrics })
}

pub fn report_csv(report: &EvalReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    format!(
        "episodes,mean_reward,mean_reward_std,coverage,coverage_std,comm_edges,comm_edges_std,comm_bandwidth,comm_bandwidth_std,tom_gi_acc,tom_oe_acc\n\
         {},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
        report.episodes,
        report.mean_reward.mean,
        report.mean_reward.std,
        report.coverage.mean,
        report.coverage.std,
        report.comm_edges.mean,
        report.comm_edges.std,
        report.comm_bandwidth.mean,
        report.comm_bandwidth.std,
        opt(report.tom_gi_acc),
        opt(report.tom_oe_acc),
    )
}

pub fn report_text(label: &str, report: &EvalReport) -> String {
    let pct = |v: Option<f64>| v.map(|x| format!("{:.1}%", 100.0 * x)).unwrap_or_else(|| "n/a".into());
    format!(
        "policy          {label}\n\
         episodes        {}\n\
         mean reward     {:.4} +- {:.4}\n\
         coverage rate   {:.4} +- {:.4}\n\
         comm edges      {:.3} +- {:.3}\n\
         comm bandwidth  {:.3} +- {:.3}\n\
         goal inference  {}\n\
         obs estimation  {}\n",
        report.episodes,
        report.mean_reward.mean,
        report.mean_reward.std,
        report.coverage.mean,
        report.coverage.std,
        report.comm_edges.mean,
        report.comm_edges.std,
        report.comm_bandwidth.mean,
        report.comm_bandwidth.std,
        pct(report.tom_gi_acc),
        pct(report.tom_oe_acc),
    )
}

/// Evaluates and writes `report.csv`, `report.txt` and the first `replays`
/// episodes as replay files into `out`.
pub fn eval_to_dir(
    label: &str,
    policy: Policy,
    cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    pose_radius: f64,
    replays: usize,
    out: &Path,
) -> CliResult<EvalReport> {
    let report = eval_parallel(policy, cfg, episodes, seed, pose_radius)?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let csv = out.join("report.csv");
    fs::write(&csv, report_csv(&report)).map_err(|e| CliError::io(&csv, e))?;
    let txt = out.join("report.txt");
    fs::write(&txt, report_text(label, &report)).map_err(|e| CliError::io(&txt, e))?;
    for k in 0..replays.min(episodes) {
        let (_, frames) = record_episode(policy, cfg, episode_seed(seed, k), pose_radius)?;
        let path = out.join(format!("replay-{k:03}.txt"));
        fs::write(&path, Replay::new(cfg, frames).to_text()).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(report)
}

/// Parses `a..b` (inclusive), `a,b,c` or a single count.
pub fn parse_range(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::Usage(format!("malformed range `{s}`; use 2..4, 2,3,4 or 3"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let out = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<CliResult<Vec<_>>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}
