//! Command-line surface: `train`, `eval`, `render` and `grid`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use tom2c_core::agent::{DecideMode, Tom2cModel};
use tom2c_core::metrics::Policy;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::render::render_replay;
use crate::replay::Replay;
use crate::run::{eval_to_dir, grid_csv, grid_parallel, parse_range, train};

#[derive(Debug, Parser)]
#[command(name = "tom2c", version, about = "Train, evaluate and render theory-of-mind cooperative agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a built-in policy.
    Eval(EvalArgs),
    /// Render a replay file to one SVG per step.
    Render(RenderArgs),
    /// Coverage ratio to the heuristic over a grid of team sizes.
    Grid(GridArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// key=value override; repeatable, wins over file and environment.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Print a progress line every N updates (0 = quiet).
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyName {
    Model,
    Heuristic,
    Random,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeName {
    Greedy,
    Sample,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Trained checkpoint (implies --policy model).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyName>,
    #[arg(long, value_enum, default_value_t = ModeName::Greedy)]
    pub mode: ModeName,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Agents farther apart than this neither infer nor message each other.
    #[arg(long)]
    pub pose_mask_radius: Option<f64>,
    /// Write replays of the first N episodes.
    #[arg(long, default_value_t = 0)]
    pub replays: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub replay: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Sensor counts: 2..4, 2,3,4 or 3.
    #[arg(long, default_value = "2..4")]
    pub agents: String,
    /// Target counts, same syntax.
    #[arg(long, default_value = "2..4")]
    pub targets: String,
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output file.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments and runs the subcommand. Help and version requests
/// print and succeed; other parse failures are usage errors.
pub fn main_with<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            return Err(CliError::Usage(text.trim_start_matches("error: ").trim_end().to_string()));
        }
    };
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Grid(a) => cmd_grid(&a),
    }
}

fn load_config(args: &ConfigArgs, checkpoint: Option<&Checkpoint>) -> CliResult<RunConfig> {
    let base = match checkpoint {
        Some(c) => c.config_settings()?,
        None => Vec::new(),
    };
    RunConfig::load_over(base, args.config.as_deref(), &args.overrides)
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let resume = a.resume.as_deref().map(|p| Checkpoint::load(p).map(|c| (p, c))).transpose()?;
    let run = load_config(&a.config, resume.as_ref().map(|(_, c)| c))?;
    let mut progress = |row: &crate::run::MetricsRow| {
        if a.log_every > 0 && (row.cr_loss.is_some() || row.updates % a.log_every == 0) {
            eprintln!(
                "update {:>6}  step {:>9}  episodes {:>7}  gamma {:.3}  L {:>3}  coverage {:.3}  edges {:.2}",
                row.updates, row.step, row.episode, row.gamma, row.length, row.stats.coverage, row.stats.mean_edges
            );
        }
    };
    let out = train(&run, &a.out, resume.as_ref().map(|(p, c)| (*p, c)), &mut progress)?;
    let last = out.checkpoints.last().map(|p| p.display().to_string()).unwrap_or_default();
    println!("{}", a.out.display());
    eprintln!("{} env steps, {} updates, checkpoint {last}", out.trainer.counters.env_steps, out.trainer.counters.rl_updates);
    Ok(())
}

/// A policy plus the model it borrows from, if any.
struct Loaded {
    name: PolicyName,
    mode: DecideMode,
    model: Option<Tom2cModel>,
    checkpoint: Option<Checkpoint>,
}

impl Loaded {
    fn from_args(a: &PolicyArgs) -> CliResult<Self> {
        let name = match (a.policy, &a.checkpoint) {
            (Some(PolicyName::Model) | None, Some(_)) => PolicyName::Model,
            (None | Some(PolicyName::Model), None) => {
                return Err(CliError::Usage("the model policy needs --checkpoint".into()));
            }
            (Some(p), Some(_)) => return Err(CliError::Usage(format!("--checkpoint conflicts with --policy {p:?}"))),
            (Some(p), None) => p,
        };
        let checkpoint = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
        let model = checkpoint.as_ref().map(Checkpoint::model).transpose()?;
        let mode = match a.mode {
            ModeName::Greedy => DecideMode::Greedy,
            ModeName::Sample => DecideMode::Sample,
        };
        Ok(Self { name, mode, model, checkpoint })
    }

    fn policy(&self) -> Policy<'_> {
        match (self.name, &self.model) {
            (PolicyName::Heuristic, _) => Policy::Heuristic,
            (PolicyName::Random, _) => Policy::RandomGoals,
            (PolicyName::Scripted, _) => Policy::Scripted,
            (PolicyName::Model, Some(model)) => Policy::Model { model, mode: self.mode },
            (PolicyName::Model, None) => unreachable!("model policy always carries a model"),
        }
    }

    fn label(&self) -> String {
        format!("{:?}", self.name).to_lowercase()
    }
}

fn check_task(loaded: &Loaded, run: &RunConfig) -> CliResult<()> {
    if let Some(m) = &loaded.model {
        if m.config.task != run.env.task {
            return Err(CliError::Config(format!(
                "checkpoint was trained on {} but the config selects {}",
                m.config.task, run.env.task
            )));
        }
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    if a.episodes == 0 {
        return Err(CliError::Config("episodes must be positive".into()));
    }
    let loaded = Loaded::from_args(&a.policy)?;
    let run = load_config(&a.config, loaded.checkpoint.as_ref())?;
    check_task(&loaded, &run)?;
    let radius = a.pose_mask_radius.unwrap_or(run.env.pose_visibility_radius);
    if radius.is_nan() || radius <= 0.0 {
        return Err(CliError::Config("pose mask radius must be positive".into()));
    }
    let env = tom2c_core::EnvConfig { pose_visibility_radius: radius, ..run.env.clone() };
    let report = eval_to_dir(&loaded.label(), loaded.policy(), &env, a.episodes, a.seed, radius, a.replays, &a.out)?;
    print!("{}", crate::run::report_text(&loaded.label(), &report));
    Ok(())
}

pub fn cmd_render(a: &RenderArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.replay).map_err(|e| CliError::io(&a.replay, e))?;
    let replay = Replay::parse(&text)?;
    let frames = render_replay(&replay, &a.out)?;
    println!("{} frames, index {}", frames.len(), Path::new(&a.out).join("index.html").display());
    Ok(())
}

pub fn cmd_grid(a: &GridArgs) -> CliResult<()> {
    let agents = parse_range(&a.agents)?;
    let targets = parse_range(&a.targets)?;
    if a.episodes == 0 {
        return Err(CliError::Config("episodes must be positive".into()));
    }
    let loaded = Loaded::from_args(&a.policy)?;
    let run = load_config(&a.config, loaded.checkpoint.as_ref())?;
    check_task(&loaded, &run)?;
    let ratios = grid_parallel(loaded.policy(), &run.env, &agents, &targets, a.episodes, a.seed)?;
    let csv = grid_csv(&agents, &targets, &ratios);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(&a.out, &csv).map_err(|e| CliError::io(&a.out, e))?;
    print!("{csv}");
    Ok(())
}
