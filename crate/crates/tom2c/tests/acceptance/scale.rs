//! A small-team checkpoint driven through the CLI at larger team sizes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::Outcome;

fn tom2c(args: &[&str]) -> Result<String, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tom2c"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with(tom2c::config::ENV_PREFIX)) {
        cmd.env_remove(k);
    }
    let out = cmd.args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("tom2c {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn latest_checkpoint(run: &Path) -> Result<PathBuf, String> {
    let mut all: Vec<PathBuf> = fs::read_dir(run.join("checkpoints"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    all.sort();
    all.pop().ok_or_else(|| "training wrote no checkpoint".into())
}

fn parse_grid(csv: &str) -> Result<Vec<Vec<f64>>, String> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or("empty grid")?;
    if header != "sensors\\targets,2,3,4" {
        return Err(format!("unexpected header {header}"));
    }
    lines
        .map(|l| l.split(',').skip(1).map(|x| x.parse::<f64>().map_err(|e| e.to_string())).collect())
        .collect()
}

fn check() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    tom2c(&["train", "--out", run_s, "--set", "n_agents=2", "--set", "m_targets=2", "--set", "max_steps=4000", "--log-every", "0"])?;
    let ckpt = latest_checkpoint(&run)?;
    let ckpt_s = ckpt.to_str().unwrap();
    let before = fs::read(&ckpt).map_err(|e| e.to_string())?;

    let mut runs = Vec::new();
    for (n, m) in [(4, 5), (6, 6)] {
        let out = dir.path().join(format!("eval-{n}v{m}"));
        let text = tom2c(&[
            "eval",
            "--checkpoint",
            ckpt_s,
            "--set",
            &format!("n_agents={n}"),
            "--set",
            &format!("m_targets={m}"),
            "--episodes",
            "5",
            "--out",
            out.to_str().unwrap(),
        ])?;
        if !out.join("report.csv").exists() {
            return Err(format!("{n}v{m}: no report written"));
        }
        runs.push(format!("{n}v{m} ok ({} report lines)", text.lines().count()));
    }

    let grid = dir.path().join("grid.csv");
    tom2c(&["grid", "--checkpoint", ckpt_s, "--agents", "2..4", "--targets", "2..4", "--episodes", "10", "--out", grid.to_str().unwrap()])?;
    let ratios = parse_grid(&fs::read_to_string(&grid).map_err(|e| e.to_string())?)?;
    if ratios.len() != 3 || ratios.iter().any(|r| r.len() != 3) {
        return Err(format!("grid is not 3 x 3: {ratios:?}"));
    }
    if let Some(r) = ratios.iter().flatten().find(|r| !(0.0..=1.2).contains(*r)) {
        return Err(format!("ratio {r} outside [0, 1.2]"));
    }
    if fs::read(&ckpt).map_err(|e| e.to_string())? != before {
        return Err("evaluation modified the checkpoint".into());
    }
    let lo = ratios.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().flatten().copied().fold(0.0, f64::max);
    Ok(format!("2v2 checkpoint: {}; 3 x 3 grid ratios in [{lo:.3}, {hi:.3}] within [0, 1.2]", runs.join(", ")))
}

pub fn run() -> Outcome {
    match check() {
        Ok(detail) => Outcome::new(true, detail),
        Err(e) => Outcome::fail(e),
    }
}
