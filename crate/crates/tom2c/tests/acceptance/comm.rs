//! Communication reduction on batches with known message influence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tom2c_core::agent::{DecideMode, ModelConfig, Tom2cModel};
use tom2c_core::metrics::{bandwidth, eval_policy, Policy};
use tom2c_core::msmtc::MsmtcEnv;
use tom2c_core::training::{GoalSource, RolloutBatch, TrainConfig, Trainer, Worker};
use tom2c_core::{EnvConfig, Task};

use crate::Outcome;

const BUDGET: usize = 500;

fn open_arena() -> EnvConfig {
    EnvConfig { n_obstacles: 0, sense_radius: 2.0, ..EnvConfig::coverage(3, 3) }
}

fn collect(model: &Tom2cModel) -> RolloutBatch {
    let cfg = open_arena();
    let segments = (0..6)
        .map(|id| {
            let mut w = Worker::<MsmtcEnv>::new(id, &cfg, 21, model).unwrap();
            w.collect(model, 2, GoalSource::Policy(DecideMode::Sample), f64::INFINITY).unwrap()
        })
        .collect();
    RolloutBatch { segments, pose_radius: f64::INFINITY }
}

/// Mean noise-free retain probability over every directed pair of the batch.
fn mean_retain(model: &Tom2cModel, batch: &RolloutBatch) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut total, mut count) = (0.0, 0usize);
    for s in batch.steps() {
        let d = model
            .decide_team(&s.observations, &s.poses, &s.hidden, batch.pose_radius, DecideMode::Greedy, &mut rng)
            .unwrap();
        let n = s.poses.len();
        for i in 0..n {
            for j in (0..n).filter(|j| *j != i) {
                total += d.comm.retain_prob[i][j];
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Updates until the mean retain probability passes `done`, if within budget.
fn tune(batch: &RolloutBatch, model: &Tom2cModel, done: impl Fn(f64) -> bool) -> (Option<usize>, f64, f64) {
    let mut t = Trainer::new(TrainConfig::default(), model.clone()).unwrap();
    let before = mean_retain(&t.model, batch);
    let mut p = before;
    for k in 1..=BUDGET {
        if t.cr_update(batch).unwrap().is_none() {
            return (None, before, p);
        }
        if k % 10 == 0 || k == BUDGET {
            p = mean_retain(&t.model, batch);
            if done(p) {
                return (Some(k), before, p);
            }
        }
    }
    (None, before, p)
}

pub fn run() -> Outcome {
    let model = Tom2cModel::new(ModelConfig::new(Task::Msmtc), 8).unwrap();
    let batch = collect(&model);

    let mut silent = batch.clone();
    for seg in &mut silent.segments {
        for s in &mut seg.steps {
            s.silent_probs = s.probs.clone();
        }
    }
    let mut swayed = batch.clone();
    for seg in &mut swayed.segments {
        for s in &mut seg.steps {
            s.silent_probs = s.probs.iter().map(|p| p.iter().map(|x| if *x >= 0.5 { 0.01 } else { 0.99 }).collect()).collect();
        }
    }
    let (down_at, down0, down) = tune(&silent, &model, |p| p < 0.2);
    let (up_at, up0, up) = tune(&swayed, &model, |p| p > 0.8);

    let table = (bandwidth(6.03, 5) - 30.15).abs() <= 1e-12;
    let rounds_exact = batch.steps().all(|s| s.comm.bandwidth() == s.comm.edge_count() * 3);
    let cfg = EnvConfig { episode_length: 40, ..EnvConfig::coverage(3, 3) };
    let report = eval_policy(Policy::Model { model: &model, mode: DecideMode::Sample }, &cfg, 5, 1, f64::INFINITY).unwrap();
    let report_exact = (report.comm_bandwidth.mean - 3.0 * report.comm_edges.mean).abs() <= 1e-9;

    let at = |k: Option<usize>| k.map_or(format!("not within {BUDGET}"), |k| format!("after {k}"));
    Outcome::new(
        down_at.is_some() && up_at.is_some() && table && rounds_exact && report_exact,
        format!(
            "messages irrelevant: p_retain {down0:.3} -> {down:.3} < 0.2 {} updates; messages decisive: {up0:.3} -> {up:.3} > 0.8 {} updates; \
             bandwidth(6.03, 5) = {} and every round sends edges x m ({})",
            at(down_at),
            at(up_at),
            bandwidth(6.03, 5),
            if rounds_exact && report_exact { "exact" } else { "mismatch" }
        ),
    )
}
