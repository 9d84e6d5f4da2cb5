//! Training objectives. Plain `f64` helpers come first; the graph-building
//! versions replay stored transitions through the model.

use alloc::vec::Vec;

use super::rollout::{RolloutBatch, StepRecord};
use crate::agent::{TeamInput, Tom2cModel};
use crate::autodiff::{Graph, Matrix, Var};
use crate::geometry::Task;
use crate::math;
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_FLOOR, 1]` before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

fn safe_ln(p: f64) -> f64 {
    math::ln(p.clamp(PROB_FLOOR, 1.0))
}

/// Binary cross entropy of prediction `p` against `label`.
pub fn bce(p: f64, label: bool) -> f64 {
    if label {
        -safe_ln(p)
    } else {
        -safe_ln(1.0 - p)
    }
}

/// `KL(Bernoulli(p) || Bernoulli(q))`.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * (safe_ln(p) - safe_ln(q));
    }
    if p < 1.0 {
        kl += (1.0 - p) * (safe_ln(1.0 - p) - safe_ln(1.0 - q));
    }
    kl
}

/// Divergence of the message-free goal distribution from the one with
/// messages: per-target Bernoulli sum (coverage) or categorical (navigation),
/// over visible targets only.
pub fn goal_kl(task: Task, silent: &[f64], with: &[f64], visible: &[bool]) -> f64 {
    let vis = silent.iter().zip(with).zip(visible).filter(|(_, v)| **v).map(|(pq, _)| pq);
    match task {
        Task::Msmtc => vis.map(|(p, q)| kl_bernoulli(*p, *q)).sum(),
        Task::Cn => vis.filter(|(p, _)| **p > 0.0).map(|(p, q)| p * (safe_ln(*p) - safe_ln(*q))).sum(),
    }
}

/// One supervised edge for communication reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeLabel {
    pub sender: usize,
    pub receiver: usize,
    pub retain: bool,
}

/// Every reachable edge into receiver `i` is labeled retain iff
/// `KL(g_i^- || g_i) >= threshold`.
pub fn cr_labels(task: Task, step: &StepRecord, threshold: f64) -> Result<Vec<EdgeLabel>> {
    let n = step.poses.len();
    if step.silent_probs.len() != n || step.probs.len() != n {
        return Err(Error::Invalid("transition lacks message-free goal distributions".into()));
    }
    let mut out = Vec::new();
    for i in 0..n {
        let chi = goal_kl(task, &step.silent_probs[i], &step.probs[i], &step.observations[i].visible);
        let retain = chi >= threshold;
        for s in (0..n).filter(|s| *s != i && step.reachable[*s][i]) {
            out.push(EdgeLabel { sender: s, receiver: i, retain });
        }
    }
    Ok(out)
}

/// Summed binary cross entropy of `probs` against `labels` over entries
/// where `include` is set.
pub fn bce_sum(g: &mut Graph, probs: Var, labels: &Matrix, include: &[bool]) -> Result<Var> {
    let skip: Vec<bool> = include.iter().map(|b| !b).collect();
    let not_label = labels.map(|y| 1.0 - y);
    let pos = g.clamp(probs, PROB_FLOOR, 1.0)?;
    let pos = g.log(pos)?;
    let y = g.constant(labels.clone())?;
    let pos = g.mul(pos, y)?;
    let q = g.one_minus(probs)?;
    let neg = g.clamp(q, PROB_FLOOR, 1.0)?;
    let neg = g.log(neg)?;
    let ny = g.constant(not_label)?;
    let neg = g.mul(neg, ny)?;
    let both = g.add(pos, neg)?;
    let both = g.masked_fill(both, &skip, 0.0)?;
    let s = g.sum_all(both)?;
    g.neg(s)
}

pub(crate) fn step_input<'a>(step: &'a StepRecord, pose_radius: f64) -> TeamInput<'a> {
    TeamInput {
        observations: &step.observations,
        poses: &step.poses,
        hidden: &step.hidden,
        pose_radius,
        edge_noise: step.edge_noise.as_deref(),
    }
}

fn label_matrix(rows: &[Vec<bool>]) -> Matrix {
    let m = rows.first().map_or(0, |r| r.len());
    let mut out = Matrix::zeros(rows.len(), m);
    for (j, r) in rows.iter().enumerate() {
        for (q, v) in r.iter().enumerate() {
            out.set(j, q, if *v { 1.0 } else { 0.0 });
        }
    }
    out
}

/// Goal-inference and observation-estimation losses, each averaged over
/// every (step, observer, other agent, target) label entry.
pub struct TomLoss {
    pub goal: Var,
    pub relation: Var,
    pub total: Var,
    pub entries: usize,
}

pub fn tom_loss(g: &mut Graph, model: &Tom2cModel, batches: &[&RolloutBatch]) -> Result<TomLoss> {
    let mut goal_terms = Vec::new();
    let mut rel_terms = Vec::new();
    let mut entries = 0;
    for batch in batches {
        for step in batch.steps() {
            let input = step_input(step, batch.pose_radius);
            let goals = label_matrix(&step.goal_labels);
            let rels = label_matrix(&step.relation_labels);
            let m = goals.cols();
            for i in 0..step.poses.len() {
                let tom = model.tom_forward(g, i, &input)?;
                let include: Vec<bool> = tom.reachable.iter().flat_map(|r| core::iter::repeat_n(*r, m)).collect();
                entries += include.iter().filter(|b| **b).count();
                goal_terms.push(bce_sum(g, tom.gstar, &goals, &include)?);
                rel_terms.push(bce_sum(g, tom.cstar, &rels, &include)?);
            }
        }
    }
    if entries == 0 {
        return Err(Error::Invalid("no theory-of-mind labels in the buffer".into()));
    }
    let scale = 1.0 / entries as f64;
    let goal = g.concat_rows(&goal_terms)?;
    let goal = g.sum_all(goal)?;
    let goal = g.scale(goal, scale)?;
    let relation = g.concat_rows(&rel_terms)?;
    let relation = g.sum_all(relation)?;
    let relation = g.scale(relation, scale)?;
    let total = g.add(goal, relation)?;
    Ok(TomLoss { goal, relation, total, entries })
}

/// Communication-reduction loss: binary cross entropy of each sender's
/// (retain, cut) probabilities against the KL labels, averaged over the
/// labeled edges. `None` when the batch has no labeled edge.
pub fn cr_loss(g: &mut Graph, model: &Tom2cModel, batch: &RolloutBatch, threshold: f64) -> Result<Option<(Var, usize)>> {
    let task = model.config.task;
    let mut terms = Vec::new();
    let mut count = 0;
    for step in batch.steps() {
        let labels = cr_labels(task, step, threshold)?;
        if labels.is_empty() {
            continue;
        }
        let input = step_input(step, batch.pose_radius);
        let fwd = model.forward_team(g, &input, false)?;
        for l in &labels {
            let a = &fwd.agents[l.sender];
            let s = if l.receiver < l.sender { l.receiver } else { l.receiver - 1 };
            let logits = g.slice_rows(a.edge_logits, s, 1)?;
            let logits = g.scale(logits, 1.0 / model.config.temperature)?;
            let p = g.softmax_rows(logits, None)?;
            let retain = g.slice_cols(p, 1, 1)?;
            let y = Matrix::scalar(if l.retain { 1.0 } else { 0.0 });
            terms.push(bce_sum(g, retain, &y, &[true])?);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(None);
    }
    let all = g.concat_rows(&terms)?;
    let s = g.sum_all(all)?;
    Ok(Some((g.scale(s, 1.0 / count as f64)?, count)))
}

/// Discounted n-step returns bootstrapped from `bootstrap`.
pub fn n_step_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct A2cStats {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

pub struct A2cLoss {
    pub total: Var,
    pub stats: A2cStats,
}

/// Actor-critic loss averaged over transitions: `-sum_i log pi(g_i) A`,
/// `(R - V)^2`, minus `entropy_weight` times the summed goal entropy.
pub fn a2c_loss(g: &mut Graph, model: &Tom2cModel, batch: &RolloutBatch, gamma: f64, entropy_weight: f64) -> Result<A2cLoss> {
    let t = batch.transitions();
    if t == 0 {
        return Err(Error::Invalid("empty rollout batch".into()));
    }
    let mut policy_terms = Vec::with_capacity(t);
    let mut value_terms = Vec::with_capacity(t);
    let mut entropy_terms = Vec::with_capacity(t);
    for seg in &batch.segments {
        let rewards: Vec<f64> = seg.steps.iter().map(|s| s.reward).collect();
        let returns = n_step_returns(&rewards, seg.bootstrap, gamma);
        for (step, ret) in seg.steps.iter().zip(returns) {
            let input = step_input(step, batch.pose_radius);
            let fwd = model.forward_team(g, &input, false)?;
            let value = model.critic_value(g, &fwd.features)?;
            let advantage = ret - g.value(value).item();
            for (i, goal) in step.goals.iter().enumerate() {
                let vis = &step.observations[i].visible;
                let lp = model.goal_log_prob(g, fwd.logits[i], vis, goal)?;
                policy_terms.push(g.scale(lp, -advantage)?);
                entropy_terms.push(model.goal_entropy(g, fwd.logits[i], vis)?);
            }
            let err = g.add_scalar(value, -ret)?;
            value_terms.push(g.mul(err, err)?);
        }
    }
    let scale = 1.0 / t as f64;
    let sum = |g: &mut Graph, terms: &[Var]| -> Result<Var> {
        let all = g.concat_rows(terms)?;
        let s = g.sum_all(all)?;
        g.scale(s, scale)
    };
    let policy = sum(g, &policy_terms)?;
    let value = sum(g, &value_terms)?;
    let entropy = sum(g, &entropy_terms)?;
    let bonus = g.scale(entropy, -entropy_weight)?;
    let total = g.add(policy, value)?;
    let total = g.add(total, bonus)?;
    let stats = A2cStats {
        policy: g.value(policy).item(),
        value: g.value(value).item(),
        entropy: g.value(entropy).item(),
        total: g.value(total).item(),
    };
    Ok(A2cLoss { total, stats })
}
