use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Goal;
use crate::autodiff::gumbel::{hard_one_hot, sample_noise};
use crate::autodiff::layers::{Attention, Dense, Gru, Mlp};
use crate::autodiff::{Graph, Matrix, ParamGroup, ParamStore, Var};
use crate::geometry::{Observation, Pose2D, Task};
use crate::math;
use crate::{Error, Result};

/// Width of one encoded observation row.
pub const ROW_FEATURES: usize = 6;
/// Width of the pose input to the observation estimator.
pub const POSE_FEATURES: usize = 7;

/// Encoder input: `(i/n, q/m, d, alpha, d cos alpha, d sin alpha)` per
/// target; invisible rows stay zero.
pub fn row_features(obs: &Observation) -> Matrix {
    let mut m = Matrix::zeros(obs.len(), ROW_FEATURES);
    for (q, row) in obs.rows.iter().enumerate() {
        if !obs.visible[q] {
            continue;
        }
        let [i, k, d, a] = *row;
        m.row_mut(q).copy_from_slice(&[i, k, d, a, d * math::cos(a), d * math::sin(a)]);
    }
    m
}

/// Pose of `other` as seen from `observer`: body-frame offset, its
/// length, relative heading as `(cos, sin)`, and the absolute position.
pub fn pose_features(observer: &Pose2D, other: &Pose2D) -> [f64; POSE_FEATURES] {
    let (d, yaw) = observer.relative(other);
    [d.x, d.y, d.norm(), math::cos(yaw), math::sin(yaw), other.x, other.y]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub task: Task,
    pub embed_dim: usize,
    pub tom_hidden: usize,
    pub head_hidden: usize,
    pub graph_hidden: usize,
    pub critic_width: usize,
    pub graph_rounds: usize,
    pub temperature: f64,
    /// Inferred-goal probability above which a target passes the filter.
    pub goal_threshold: f64,
}

impl ModelConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            embed_dim: 64,
            tom_hidden: 32,
            head_hidden: 64,
            graph_hidden: 64,
            critic_width: 192,
            graph_rounds: 2,
            temperature: 1.0,
            goal_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecideMode {
    Sample,
    Greedy,
}

/// Inputs of one high-level step for the whole team.
#[derive(Debug, Clone, Copy)]
pub struct TeamInput<'a> {
    pub observations: &'a [Observation],
    pub poses: &'a [Pose2D],
    /// Per observer `i`: `n x tom_hidden` recurrent state, one row per agent.
    pub hidden: &'a [Matrix],
    /// Agents farther apart than this cannot model or message each other.
    pub pose_radius: f64,
    /// Per sender: `(n - 1) x 2` Gumbel noise for its outgoing edges
    /// (others in index order). `None` takes the most likely edge type.
    pub edge_noise: Option<&'a [Matrix]>,
}

/// Graph handles of one agent's encoder and theory-of-mind outputs.
#[derive(Debug, Clone)]
pub struct TomVars {
    pub encoded: Var,
    pub eps: Var,
    pub gstar: Var,
    pub cstar: Var,
    pub reachable: Vec<bool>,
}

/// Graph handles of one agent's private computation.
#[derive(Debug, Clone)]
pub struct AgentVars {
    /// `m x d` encoded targets.
    pub encoded: Var,
    /// `n x tom_hidden`; row `i` is the self estimate.
    pub eps: Var,
    /// `n x m` inferred goals; rows for self and unreachable agents are zero.
    pub gstar: Var,
    /// `n x m` inferred relations, zero on the same rows as `gstar`.
    pub cstar: Var,
    /// `reachable[j]`: `j != i` and within the pose radius.
    pub reachable: Vec<bool>,
    /// `(n - 1) x 2` logits of (cut, retain) for edges to the others.
    pub edge_logits: Var,
    /// `(n - 1) x 2` one-hot sampled edge types with relaxed gradients.
    pub edges: Var,
}

#[derive(Debug, Clone)]
pub struct TeamForward {
    pub agents: Vec<AgentVars>,
    /// Per receiver: `1 x m` sum of delivered messages.
    pub msg_sum: Vec<Var>,
    /// Per agent: `m x (d + 2)` actor feature.
    pub features: Vec<Var>,
    /// Per agent: `m x 1` goal logits.
    pub logits: Vec<Var>,
    /// Per agent: goal logits with the message sum zeroed, when requested.
    pub silent_logits: Option<Vec<Var>>,
}

/// One high-level communication round as seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct CommRound {
    /// `retain_prob[i][j]` for `i != j`; zero on the diagonal.
    pub retain_prob: Vec<Vec<f64>>,
    /// `edges[i][j]`: a message went from `i` to `j`.
    pub edges: Vec<Vec<bool>>,
    /// `(sender, receiver, message)` for every retained edge.
    pub messages: Vec<(usize, usize, Vec<f64>)>,
}

impl CommRound {
    pub fn edge_count(&self) -> usize {
        self.messages.len()
    }

    /// Scalar volume sent this round.
    pub fn bandwidth(&self) -> usize {
        self.messages.iter().map(|(_, _, m)| m.len()).sum()
    }
}

/// Everything a rollout keeps from one team decision.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamDecision {
    pub goals: Vec<Goal>,
    /// Per agent: per-target choice probabilities (coverage) or landmark
    /// distribution (navigation); masked targets are zero.
    pub probs: Vec<Vec<f64>>,
    /// Same with the received messages removed.
    pub silent_probs: Vec<Vec<f64>>,
    pub comm: CommRound,
    /// `gstar[i][j]`: agent `i`'s inferred goals of `j` (zero when `i == j`).
    pub gstar: Vec<Vec<Vec<f64>>>,
    pub cstar: Vec<Vec<Vec<f64>>>,
    pub reachable: Vec<Vec<bool>>,
    pub next_hidden: Vec<Matrix>,
    pub edge_noise: Option<Vec<Matrix>>,
    pub value: f64,
}

/// The shared-parameter ToM2C network.
#[derive(Debug, Clone, PartialEq)]
pub struct Tom2cModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    encoder: Mlp,
    attention: Attention,
    tom_gru: Gru,
    goal_head: Mlp,
    relation_head: Mlp,
    node_encoder: Dense,
    edge_encoder: Dense,
    node_update: Dense,
    edge_update: Dense,
    edge_head: Dense,
    actor: Mlp,
    critic_token: Dense,
    critic_attention: Attention,
    critic_head: Mlp,
}

fn others(n: usize, i: usize) -> impl Iterator<Item = usize> {
    (0..n).filter(move |j| *j != i)
}

/// Position of `receiver` among the others of `sender`.
fn slot(sender: usize, receiver: usize) -> usize {
    if receiver < sender {
        receiver
    } else {
        receiver - 1
    }
}

impl Tom2cModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let r = &mut rng;
        let d = config.embed_dim;
        let h = config.tom_hidden;
        let w = config.head_hidden;
        let gh = config.graph_hidden;
        let cw = config.critic_width;
        use ParamGroup::*;
        Ok(Self {
            encoder: Mlp::new(&mut p, r, "encoder.mlp", Encoder, &[ROW_FEATURES, d, d])?,
            attention: Attention::new(&mut p, r, "encoder.att", Encoder, d, d)?,
            tom_gru: Gru::new(&mut p, r, "tom.gru", Tom, POSE_FEATURES, h)?,
            goal_head: Mlp::new(&mut p, r, "tom.goal", Tom, &[d + h, w, 1])?,
            relation_head: Mlp::new(&mut p, r, "tom.relation", Tom, &[d + h, w, 1])?,
            node_encoder: Dense::new(&mut p, r, "sender.node_enc", Sender, d + h, gh)?,
            edge_encoder: Dense::new(&mut p, r, "sender.edge_enc", Sender, 2 * (d + h), gh)?,
            node_update: Dense::new(&mut p, r, "sender.node_upd", Sender, 3 * gh, gh)?,
            edge_update: Dense::new(&mut p, r, "sender.edge_upd", Sender, 3 * gh, gh)?,
            edge_head: Dense::new(&mut p, r, "sender.edge_head", Sender, gh, 2)?,
            actor: Mlp::new(&mut p, r, "actor", Actor, &[d + 2, w, 1])?,
            critic_token: Dense::new(&mut p, r, "critic.token", Critic, d + 2, cw)?,
            critic_attention: Attention::new(&mut p, r, "critic.att", Critic, cw, cw)?,
            critic_head: Mlp::new(&mut p, r, "critic.head", Critic, &[cw, w, 1])?,
            params: p,
            config,
        })
    }

    /// Zero recurrent state for a team of `n`.
    pub fn initial_hidden(&self, n: usize) -> Vec<Matrix> {
        (0..n).map(|_| Matrix::zeros(n, self.config.tom_hidden)).collect()
    }

    /// `m x d` per-target encoding; invisible targets are excluded from
    /// attention and encode to zero.
    pub fn encode(&self, g: &mut Graph, obs: &Observation) -> Result<Var> {
        if obs.is_empty() {
            return Err(Error::Invalid("observation has no target rows".into()));
        }
        let x = g.constant(row_features(obs))?;
        let h = self.encoder.forward(g, &self.params, x)?;
        let h = g.tanh(h)?;
        self.attention.forward(g, &self.params, h, Some(&obs.visible))
    }

    /// Observation estimates of every agent from `observer`'s viewpoint.
    pub fn tom_estimate(&self, g: &mut Graph, observer: usize, poses: &[Pose2D], hidden: &Matrix) -> Result<Var> {
        let n = poses.len();
        let mut x = Matrix::zeros(n, POSE_FEATURES);
        for (j, pose) in poses.iter().enumerate() {
            x.row_mut(j).copy_from_slice(&pose_features(&poses[observer], pose));
        }
        let x = g.constant(x)?;
        let h = g.constant(hidden.clone())?;
        self.tom_gru.forward(g, &self.params, x, h)
    }

    /// Applies a per-(agent, target) head to every pair of `eps` rows and
    /// encoded targets, returning `n x m` probabilities.
    fn pair_head(&self, g: &mut Graph, head: &Mlp, encoded: Var, eps: Var) -> Result<Var> {
        let (m, _) = g.shape(encoded);
        let (n, _) = g.shape(eps);
        let tiled: Vec<Var> = (0..n).map(|_| encoded).collect();
        let targets = g.concat_rows(&tiled)?;
        let mut rows = Vec::with_capacity(n);
        for j in 0..n {
            let e = g.row(eps, j)?;
            rows.push(g.repeat_rows(e, m)?);
        }
        let agents = g.concat_rows(&rows)?;
        let z = g.concat_cols(&[targets, agents])?;
        let logits = head.forward(g, &self.params, z)?;
        let p = g.sigmoid(logits)?;
        g.reshape(p, n, m)
    }

    pub fn infer_goals(&self, g: &mut Graph, encoded: Var, eps: Var) -> Result<Var> {
        self.pair_head(g, &self.goal_head, encoded, eps)
    }

    pub fn infer_relation(&self, g: &mut Graph, encoded: Var, eps: Var) -> Result<Var> {
        self.pair_head(g, &self.relation_head, encoded, eps)
    }

    /// `n x (d + tom_hidden)` node features of `observer`'s local graph.
    pub fn build_node_features(&self, g: &mut Graph, observer: usize, encoded: Var, eps: Var, gstar: Var) -> Result<Var> {
        let (n, m) = g.shape(gstar);
        let gv = g.value(gstar);
        let mut filter = Matrix::zeros(n, m);
        for j in 0..n {
            for q in 0..m {
                let pass = j == observer || gv.get(j, q) > self.config.goal_threshold;
                filter.set(j, q, if pass { 1.0 } else { 0.0 });
            }
        }
        let filter = g.constant(filter)?;
        let filtered = g.set_matmul(filter, encoded)?;
        g.concat_cols(&[filtered, eps])
    }

    /// Interaction-network message passing; returns `n (n - 1) x graph_hidden`
    /// edge features ordered by source, then destination.
    pub fn propagate_graph(&self, g: &mut Graph, nodes: Var, rounds: usize) -> Result<Var> {
        let (n, _) = g.shape(nodes);
        if n < 2 {
            return Err(Error::Invalid("graph propagation needs at least two agents".into()));
        }
        let pairs = n * (n - 1);
        let mut src = Matrix::zeros(pairs, n);
        let mut dst = Matrix::zeros(pairs, n);
        for (p, (j, k)) in (0..n).flat_map(|j| others(n, j).map(move |k| (j, k))).enumerate() {
            src.set(p, j, 1.0);
            dst.set(p, k, 1.0);
        }
        let incoming = g.constant(dst.transpose())?;
        let src = g.constant(src)?;
        let dst = g.constant(dst)?;

        let v = self.node_encoder.forward(g, &self.params, nodes)?;
        let v = g.tanh(v)?;
        let us = g.matmul(src, nodes)?;
        let ud = g.matmul(dst, nodes)?;
        let e = g.concat_cols(&[us, ud])?;
        let e = self.edge_encoder.forward(g, &self.params, e)?;
        let mut edges = g.tanh(e)?;
        let mut node = v;
        for _ in 0..rounds {
            let agg = g.set_matmul(incoming, edges)?;
            let x = g.concat_cols(&[v, node, agg])?;
            let x = self.node_update.forward(g, &self.params, x)?;
            node = g.tanh(x)?;
            let hs = g.matmul(src, node)?;
            let hd = g.matmul(dst, node)?;
            let x = g.concat_cols(&[hs, hd, edges])?;
            let x = self.edge_update.forward(g, &self.params, x)?;
            edges = g.tanh(x)?;
        }
        Ok(edges)
    }

    /// Samples edge types for `sender`'s outgoing edges. Unreachable
    /// receivers are forced to cut and pass no gradient.
    pub fn choose_connections(
        &self,
        g: &mut Graph,
        sender: usize,
        edge_features: Var,
        reachable: &[bool],
        noise: Option<&Matrix>,
    ) -> Result<(Var, Var)> {
        let n = reachable.len();
        let own = g.slice_rows(edge_features, sender * (n - 1), n - 1)?;
        let logits = self.edge_head.forward(g, &self.params, own)?;
        let x = match noise {
            Some(z) => {
                let z = g.constant(z.clone())?;
                g.add(logits, z)?
            }
            None => logits,
        };
        let x = g.scale(x, 1.0 / self.config.temperature)?;
        let soft = g.softmax_rows(x, None)?;
        let hard = hard_one_hot(g.value(soft));
        let st = g.straight_through(soft, hard)?;
        let blocked: Vec<bool> = others(n, sender).map(|k| !reachable[k]).collect();
        let cut_col: Vec<bool> = blocked.iter().flat_map(|b| [*b, false]).collect();
        let retain_col: Vec<bool> = blocked.iter().flat_map(|b| [false, *b]).collect();
        let st = g.masked_fill(st, &cut_col, 1.0)?;
        let st = g.masked_fill(st, &retain_col, 0.0)?;
        Ok((logits, st))
    }

    /// Encoding and theory-of-mind inference of agent `i`, without the
    /// communication graph.
    pub fn tom_forward(&self, g: &mut Graph, i: usize, input: &TeamInput) -> Result<TomVars> {
        let n = input.poses.len();
        let reachable: Vec<bool> = (0..n)
            .map(|j| {
                j != i && input.poses[i].position().distance(input.poses[j].position()) <= input.pose_radius
            })
            .collect();
        let encoded = self.encode(g, &input.observations[i])?;
        let eps = self.tom_estimate(g, i, input.poses, &input.hidden[i])?;
        let keep_eps: Vec<bool> = (0..n).map(|j| j == i || reachable[j]).collect();
        let eps = g.mask_rows(eps, &keep_eps)?;
        let gstar = self.infer_goals(g, encoded, eps)?;
        let gstar = g.mask_rows(gstar, &reachable)?;
        let cstar = self.infer_relation(g, encoded, eps)?;
        let cstar = g.mask_rows(cstar, &reachable)?;
        Ok(TomVars { encoded, eps, gstar, cstar, reachable })
    }

    fn agent_forward(&self, g: &mut Graph, i: usize, input: &TeamInput) -> Result<AgentVars> {
        let n = input.poses.len();
        let TomVars { encoded, eps, gstar, cstar, reachable } = self.tom_forward(g, i, input)?;
        let (edge_logits, edges) = if n >= 2 {
            let nodes = self.build_node_features(g, i, encoded, eps, gstar)?;
            let feats = self.propagate_graph(g, nodes, self.config.graph_rounds)?;
            let noise = input.edge_noise.map(|z| &z[i]);
            self.choose_connections(g, i, feats, &reachable, noise)?
        } else {
            let empty = g.constant(Matrix::zeros(0, 2))?;
            (empty, empty)
        };
        Ok(AgentVars { encoded, eps, gstar, cstar, reachable, edge_logits, edges })
    }

    /// Message sums: receiver `k` gets `g*_{i,k}` from every sender `i`
    /// whose edge to `k` was retained.
    pub fn exchange(&self, g: &mut Graph, agents: &[AgentVars]) -> Result<Vec<Var>> {
        let n = agents.len();
        let m = g.shape(agents[0].gstar).1;
        let mut sums = Vec::with_capacity(n);
        for k in 0..n {
            if n < 2 {
                sums.push(g.constant(Matrix::zeros(1, m))?);
                continue;
            }
            let mut parts = Vec::with_capacity(n - 1);
            for i in others(n, k) {
                let e = g.slice_rows(agents[i].edges, slot(i, k), 1)?;
                let retain = g.slice_cols(e, 1, 1)?;
                let msg = g.row(agents[i].gstar, k)?;
                parts.push(g.mul_scalar(msg, retain)?);
            }
            let stacked = g.concat_rows(&parts)?;
            sums.push(g.sum_rows(stacked)?);
        }
        Ok(sums)
    }

    /// Actor feature `(E, max_j g*_{i,j}, sum of received messages)`.
    pub fn actor_feature(&self, g: &mut Graph, agent: &AgentVars, msg_sum: Var) -> Result<Var> {
        let best = g.max_rows(agent.gstar)?;
        let best = g.transpose(best)?;
        let msgs = g.transpose(msg_sum)?;
        g.concat_cols(&[agent.encoded, best, msgs])
    }

    /// `m x 1` goal logits from an actor feature.
    pub fn goal_logits(&self, g: &mut Graph, feature: Var) -> Result<Var> {
        self.actor.forward(g, &self.params, feature)
    }

    /// Forward pass of one high-level step for all agents.
    pub fn forward_team(&self, g: &mut Graph, input: &TeamInput, with_silent: bool) -> Result<TeamForward> {
        let n = input.poses.len();
        if n == 0 || input.observations.len() != n || input.hidden.len() != n {
            return Err(Error::Invalid("team input sizes disagree".into()));
        }
        let agents = (0..n).map(|i| self.agent_forward(g, i, input)).collect::<Result<Vec<_>>>()?;
        let msg_sum = self.exchange(g, &agents)?;
        let mut features = Vec::with_capacity(n);
        let mut logits = Vec::with_capacity(n);
        let mut silent = Vec::with_capacity(n);
        for (a, s) in agents.iter().zip(&msg_sum) {
            let f = self.actor_feature(g, a, *s)?;
            logits.push(self.goal_logits(g, f)?);
            features.push(f);
            if with_silent {
                let zero = g.scale(*s, 0.0)?;
                let f = self.actor_feature(g, a, zero)?;
                silent.push(self.goal_logits(g, f)?);
            }
        }
        Ok(TeamForward { agents, msg_sum, features, logits, silent_logits: with_silent.then_some(silent) })
    }

    /// Centralized value of the joint actor features; invariant to agent order.
    pub fn critic_value(&self, g: &mut Graph, features: &[Var]) -> Result<Var> {
        if features.is_empty() {
            return Err(Error::Invalid("critic needs at least one agent".into()));
        }
        let mut tokens = Vec::with_capacity(features.len());
        for f in features {
            let t = self.critic_token.forward(g, &self.params, *f)?;
            let t = g.tanh(t)?;
            tokens.push(g.mean_rows(t)?);
        }
        let tokens = g.concat_rows(&tokens)?;
        let mixed = self.critic_attention.forward(g, &self.params, tokens, None)?;
        let mixed = g.add(mixed, tokens)?;
        let pooled = g.mean_rows(mixed)?;
        self.critic_head.forward(g, &self.params, pooled)
    }

    /// Goal distribution from logits on the graph: per-target Bernoulli
    /// probabilities (coverage) or a categorical (navigation), with
    /// invisible targets at zero. `m x 1` for coverage, `1 x m` otherwise.
    pub fn goal_probs(&self, g: &mut Graph, logits: Var, visible: &[bool]) -> Result<Var> {
        match self.config.task {
            Task::Msmtc => {
                let p = g.sigmoid(logits)?;
                let keep: Vec<bool> = visible.to_vec();
                g.mask_rows(p, &keep)
            }
            Task::Cn => {
                let row = g.transpose(logits)?;
                g.softmax_rows(row, Some(visible))
            }
        }
    }

    /// Log-mass of `goal` under the distribution given by `logits`.
    pub fn goal_log_prob(&self, g: &mut Graph, logits: Var, visible: &[bool], goal: &Goal) -> Result<Var> {
        let probs = self.goal_probs(g, logits, visible)?;
        let m = visible.len();
        match self.config.task {
            Task::Msmtc => {
                let ind = goal.indicator(m);
                let chosen: Vec<bool> = (0..m).map(|q| !(visible[q] && ind[q])).collect();
                let rejected: Vec<bool> = (0..m).map(|q| !(visible[q] && !ind[q])).collect();
                let lp = g.clamp(probs, 1e-12, 1.0)?;
                let lp = g.log(lp)?;
                let lp = g.masked_fill(lp, &chosen, 0.0)?;
                let q = g.one_minus(probs)?;
                let lq = g.clamp(q, 1e-12, 1.0)?;
                let lq = g.log(lq)?;
                let lq = g.masked_fill(lq, &rejected, 0.0)?;
                let both = g.add(lp, lq)?;
                g.sum_all(both)
            }
            Task::Cn => {
                let Goal::One(k) = goal else {
                    return Err(Error::Invalid("navigation goals pick one landmark".into()));
                };
                let p = g.slice_cols(probs, *k, 1)?;
                let p = g.clamp(p, 1e-12, 1.0)?;
                g.log(p)
            }
        }
    }

    /// Entropy of the goal distribution over visible targets.
    pub fn goal_entropy(&self, g: &mut Graph, logits: Var, visible: &[bool]) -> Result<Var> {
        let probs = self.goal_probs(g, logits, visible)?;
        let hidden: Vec<bool> = visible.iter().map(|v| !v).collect();
        let plogp = |g: &mut Graph, p: Var| -> Result<Var> {
            let c = g.clamp(p, 1e-12, 1.0)?;
            let l = g.log(c)?;
            let t = g.mul(p, l)?;
            g.masked_fill(t, &hidden, 0.0)
        };
        let a = plogp(g, probs)?;
        let total = match self.config.task {
            Task::Msmtc => {
                let q = g.one_minus(probs)?;
                let b = plogp(g, q)?;
                g.add(a, b)?
            }
            Task::Cn => a,
        };
        let s = g.sum_all(total)?;
        g.neg(s)
    }

    /// Draws or picks a goal from per-target probabilities.
    pub fn pick_goal(&self, probs: &[f64], visible: &[bool], mode: DecideMode, rng: &mut impl Rng) -> Goal {
        match self.config.task {
            Task::Msmtc => Goal::Multi(
                probs
                    .iter()
                    .zip(visible)
                    .map(|(p, v)| {
                        *v && match mode {
                            DecideMode::Sample => rng.gen::<f64>() < *p,
                            DecideMode::Greedy => *p > 0.5,
                        }
                    })
                    .collect(),
            ),
            Task::Cn => {
                let pick = match mode {
                    DecideMode::Greedy => (1..probs.len()).fold(0, |b, k| if probs[k] > probs[b] { k } else { b }),
                    DecideMode::Sample => {
                        let u: f64 = rng.gen();
                        let mut acc = 0.0;
                        let mut pick = None;
                        for (k, p) in probs.iter().enumerate() {
                            acc += p;
                            if u < acc && *p > 0.0 {
                                pick = Some(k);
                                break;
                            }
                        }
                        pick.unwrap_or_else(|| probs.iter().rposition(|p| *p > 0.0).unwrap_or(0))
                    }
                };
                Goal::One(pick)
            }
        }
    }

    /// Runs one decentralized decision for the whole team without gradients.
    pub fn decide_team(
        &self,
        observations: &[Observation],
        poses: &[Pose2D],
        hidden: &[Matrix],
        pose_radius: f64,
        mode: DecideMode,
        rng: &mut impl Rng,
    ) -> Result<TeamDecision> {
        let n = poses.len();
        let noise = match mode {
            DecideMode::Sample if n >= 2 => Some((0..n).map(|_| sample_noise(rng, n - 1, 2)).collect::<Vec<_>>()),
            _ => None,
        };
        let input = TeamInput { observations, poses, hidden, pose_radius, edge_noise: noise.as_deref() };
        let mut g = Graph::inference();
        let fwd = self.forward_team(&mut g, &input, true)?;
        let silent_logits = fwd.silent_logits.clone().unwrap_or_default();

        let mut goals = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        let mut silent_probs = Vec::with_capacity(n);
        for i in 0..n {
            let vis = &observations[i].visible;
            let p = self.goal_probs(&mut g, fwd.logits[i], vis)?;
            let p = g.value(p).data().to_vec();
            let sp = self.goal_probs(&mut g, silent_logits[i], vis)?;
            silent_probs.push(g.value(sp).data().to_vec());
            goals.push(self.pick_goal(&p, vis, mode, rng));
            probs.push(p);
        }

        let mut comm = CommRound { retain_prob: vec![vec![0.0; n]; n], edges: vec![vec![false; n]; n], messages: Vec::new() };
        let mut gstar = Vec::with_capacity(n);
        let mut cstar = Vec::with_capacity(n);
        for (i, a) in fwd.agents.iter().enumerate() {
            let gs = g.value(a.gstar);
            gstar.push((0..n).map(|j| gs.row(j).to_vec()).collect::<Vec<_>>());
            let cs = g.value(a.cstar);
            cstar.push((0..n).map(|j| cs.row(j).to_vec()).collect::<Vec<_>>());
            if n < 2 {
                continue;
            }
            let logits = g.value(a.edge_logits).clone();
            let edges = g.value(a.edges).clone();
            for k in others(n, i) {
                let s = slot(i, k);
                let (cut, retain) = (logits.get(s, 0), logits.get(s, 1));
                comm.retain_prob[i][k] = if a.reachable[k] { math::sigmoid(retain - cut) } else { 0.0 };
                if edges.get(s, 1) == 1.0 {
                    comm.edges[i][k] = true;
                    comm.messages.push((i, k, gs.row(k).to_vec()));
                }
            }
        }

        let next_hidden = fwd.agents.iter().map(|a| g.value(a.eps).clone()).collect();
        let value = self.critic_value(&mut g, &fwd.features)?;
        let value = g.value(value).item();
        let reachable = fwd.agents.iter().map(|a| a.reachable.clone()).collect();
        Ok(TeamDecision {
            goals,
            probs,
            silent_probs,
            comm,
            gstar,
            cstar,
            reachable,
            next_hidden,
            edge_noise: noise,
            value,
        })
    }
}
