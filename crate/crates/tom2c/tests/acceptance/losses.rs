//! Training losses against direct summation over stored transitions.

use tom2c_core::agent::{DecideMode, ModelConfig, Tom2cModel};
use tom2c_core::autodiff::{Graph, GroupMask};
use tom2c_core::msmtc::MsmtcEnv;
use tom2c_core::training::{cr_loss, goal_kl, tom_loss, GoalSource, RolloutBatch, StepRecord, Worker};
use tom2c_core::{EnvConfig, Task};

use crate::Outcome;

const TOLERANCE: f64 = 1e-10;

fn cross_entropy(p: f64, y: bool) -> f64 {
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `sum_q p ln(p / q) + (1 - p) ln((1 - p) / (1 - q))` over visible targets.
fn chi(silent: &[f64], with: &[f64], visible: &[bool]) -> f64 {
    let mut total = 0.0;
    for q in 0..silent.len() {
        if !visible[q] {
            continue;
        }
        let (a, b) = (silent[q], with[q]);
        if a > 0.0 {
            total += a * (a / b).ln();
        }
        if a < 1.0 {
            total += (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln();
        }
    }
    total
}

/// Averages of the goal and relation cross entropies over every
/// (step, observer, reachable other, target) entry.
fn direct_tom(batch: &RolloutBatch) -> (f64, f64) {
    let (mut gi, mut oe, mut count) = (0.0, 0.0, 0usize);
    for s in batch.steps() {
        let n = s.poses.len();
        for i in 0..n {
            for j in (0..n).filter(|j| s.reachable[i][*j]) {
                for q in 0..s.goal_labels[j].len() {
                    gi += cross_entropy(s.gstar[i][j][q], s.goal_labels[j][q]);
                    oe += cross_entropy(s.cstar[i][j][q], s.relation_labels[j][q]);
                    count += 1;
                }
            }
        }
    }
    (gi / count as f64, oe / count as f64)
}

/// Mean cross entropy of each sender's noise-free retain probability
/// against the label `chi_receiver >= threshold`.
fn direct_cr(batch: &RolloutBatch, threshold: f64) -> Option<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for s in batch.steps() {
        let n = s.poses.len();
        for r in 0..n {
            let retain = chi(&s.silent_probs[r], &s.probs[r], &s.observations[r].visible) >= threshold;
            for snd in (0..n).filter(|k| *k != r && s.reachable[*k][r]) {
                total += cross_entropy(s.comm.retain_prob[snd][r], retain);
                count += 1;
            }
        }
    }
    (count > 0).then(|| total / count as f64)
}

fn chis(s: &StepRecord) -> Vec<f64> {
    (0..s.poses.len()).map(|r| chi(&s.silent_probs[r], &s.probs[r], &s.observations[r].visible)).collect()
}

pub fn run() -> Outcome {
    let cfg = EnvConfig::coverage(2, 2);
    let mut worst = [0.0f64; 4];
    let mut labels = [0usize; 2];
    for seed in 0..20u64 {
        let model = Tom2cModel::new(ModelConfig::new(Task::Msmtc), seed).unwrap();
        let segments = (0..2)
            .map(|id| {
                let mut w = Worker::<MsmtcEnv>::new(id, &cfg, seed, &model).unwrap();
                w.collect(&model, 3, GoalSource::Policy(DecideMode::Sample), f64::INFINITY).unwrap()
            })
            .collect();
        let batch = RolloutBatch { segments, pose_radius: f64::INFINITY };

        let mut g = Graph::new(GroupMask::tom());
        let loss = tom_loss(&mut g, &model, &[&batch]).unwrap();
        let (gi, oe) = direct_tom(&batch);
        worst[0] = worst[0].max((g.value(loss.goal).item() - gi).abs());
        worst[1] = worst[1].max((g.value(loss.relation).item() - oe).abs());

        let mut all: Vec<f64> = batch.steps().flat_map(chis).collect();
        for s in batch.steps() {
            for (r, c) in chis(s).iter().enumerate() {
                let lib = goal_kl(Task::Msmtc, &s.silent_probs[r], &s.probs[r], &s.observations[r].visible);
                worst[3] = worst[3].max((lib - c).abs());
            }
        }
        all.sort_by(f64::total_cmp);
        // Midway between neighbours so no chi sits on the boundary.
        let mid = all.len() / 2;
        let threshold = 0.5 * (all[mid - 1] + all[mid]);
        let mut g = Graph::new(GroupMask::sender());
        let lib = cr_loss(&mut g, &model, &batch, threshold).unwrap().map(|(v, _)| g.value(v).item());
        match (lib, direct_cr(&batch, threshold)) {
            (Some(a), Some(b)) => worst[2] = worst[2].max((a - b).abs()),
            (None, None) => {}
            _ => return Outcome::fail(format!("seed {seed}: labeled edge sets differ")),
        }
        for s in batch.steps() {
            let c = chis(s);
            labels[0] += c.iter().filter(|x| **x >= threshold).count();
            labels[1] += c.iter().filter(|x| **x < threshold).count();
        }
    }
    let pass = worst.iter().all(|w| *w <= TOLERANCE) && labels.iter().all(|l| *l > 0);
    Outcome::new(
        pass,
        format!(
            "20 random 2v2 batches, max |diff| GI {:.1e}, OE {:.1e}, CR {:.1e}, chi {:.1e} (<= 1e-10); {} retain / {} cut labels",
            worst[0], worst[1], worst[2], worst[3], labels[0], labels[1]
        ),
    )
}
