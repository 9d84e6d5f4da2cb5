//! Backpropagation against central differences.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tom2c_core::agent::{Goal, ModelConfig, Tom2cModel};
use tom2c_core::autodiff::gumbel::{gumbel_softmax, sample_noise};
use tom2c_core::autodiff::layers::{Attention, Dense, Gru, Mlp};
use tom2c_core::autodiff::{Graph, GroupMask, Matrix, ParamGroup, ParamStore, Var};
use tom2c_core::{Result, Task};

use crate::Outcome;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients below this magnitude are compared on an absolute scale.
pub const FLOOR: f64 = 1e-4;
pub const CASES: usize = 100;
/// Parameter entries probed per case; every input entry is probed.
const PARAM_SAMPLES: usize = 24;

pub trait Subject: Clone {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
}

#[derive(Clone)]
pub struct Layer<L: Clone>(pub L, pub ParamStore);

impl<L: Clone> Subject for Layer<L> {
    fn params(&self) -> &ParamStore {
        &self.1
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.1
    }
}

impl Subject for Tom2cModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn jitter<S: Subject>(subject: &mut S, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = subject.params().ids().collect();
    for id in ids {
        for x in subject.params_mut().get_mut(id).value.data_mut() {
            *x += rng.gen_range(-0.3..0.3);
        }
    }
}

fn weighted(g: &mut Graph, out: Var, w: &Matrix) -> Result<Var> {
    let w = g.constant(w.clone())?;
    let p = g.mul(out, w)?;
    g.sum_all(p)
}

/// Entries probed and the worst relative error of one case. The loss is a
/// random weighting of `build`'s output.
pub fn check_case<S, F>(rng: &mut ChaCha8Rng, subject: &S, inputs: &[Matrix], build: F) -> Result<(usize, f64)>
where
    S: Subject,
    F: Fn(&mut Graph, &S, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new(GroupMask::ALL);
    let vars = inputs.iter().map(|m| g.input(m.clone())).collect::<Result<Vec<_>>>()?;
    let out = build(&mut g, subject, &vars)?;
    let (r, c) = g.shape(out);
    let w = random(rng, r, c, 1.0);
    let loss = weighted(&mut g, out, &w)?;
    let store = subject.params();
    let param_vars: Vec<_> = store.ids().map(|id| (id, g.param(store, id))).collect();
    let grads = g.backward(loss)?;

    let value = |s: &S, xs: &[Matrix]| -> Result<f64> {
        let mut g = Graph::inference();
        let vars = xs.iter().map(|m| g.constant(m.clone())).collect::<Result<Vec<_>>>()?;
        let out = build(&mut g, s, &vars)?;
        let loss = weighted(&mut g, out, &w)?;
        Ok(g.value(loss).item())
    };

    let mut worst: f64 = 0.0;
    let mut probed = 0;
    for (k, x) in inputs.iter().enumerate() {
        for e in 0..x.len() {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[e] = x.data()[e] + STEP;
            let up = value(subject, &xs)?;
            xs[k].data_mut()[e] = x.data()[e] - STEP;
            let down = value(subject, &xs)?;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grads.wrt(vars[k]).map_or(0.0, |m| m.data()[e]);
            worst = worst.max(relative_error(analytic, numeric));
            probed += 1;
        }
    }

    let mut entries: Vec<(usize, usize)> =
        param_vars.iter().enumerate().flat_map(|(p, (id, _))| (0..store.value(*id).len()).map(move |e| (p, e))).collect();
    entries.shuffle(rng);
    for &(p, e) in entries.iter().take(PARAM_SAMPLES) {
        let (id, var) = param_vars[p];
        let base = store.value(id).data()[e];
        let mut s = subject.clone();
        s.params_mut().get_mut(id).value.data_mut()[e] = base + STEP;
        let up = value(&s, inputs)?;
        s.params_mut().get_mut(id).value.data_mut()[e] = base - STEP;
        let down = value(&s, inputs)?;
        let numeric = (up - down) / (2.0 * STEP);
        let analytic = grads.wrt(var).map_or(0.0, |m| m.data()[e]);
        worst = worst.max(relative_error(analytic, numeric));
        probed += 1;
    }
    Ok((probed, worst))
}

fn small_model(rng: &mut ChaCha8Rng, task: Task) -> Tom2cModel {
    let config = ModelConfig {
        embed_dim: rng.gen_range(2..6),
        tom_hidden: rng.gen_range(2..5),
        head_hidden: rng.gen_range(2..6),
        graph_hidden: rng.gen_range(2..5),
        critic_width: rng.gen_range(2..6),
        graph_rounds: rng.gen_range(1..3),
        ..ModelConfig::new(task)
    };
    let mut m = Tom2cModel::new(config, rng.gen()).unwrap();
    jitter(&mut m, rng);
    m
}

fn mask(rng: &mut ChaCha8Rng, len: usize) -> Vec<bool> {
    let mut v: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.7)).collect();
    let k = rng.gen_range(0..len);
    v[k] = true;
    v
}

type CaseFn = fn(&mut ChaCha8Rng) -> Result<(usize, f64)>;

fn dense(rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let (i, o, n) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..5));
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, rng, "d", ParamGroup::Actor, i, o)?;
    let mut s = Layer(layer, store);
    jitter(&mut s, rng);
    let x = random(rng, n, i, 1.0);
    check_case(rng, &s, &[x], |g, s, v| {
        let h = s.0.forward(g, &s.1, v[0])?;
        g.tanh(h)
    })
}

fn mlp(rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let widths: Vec<usize> = (0..rng.gen_range(2..5)).map(|_| rng.gen_range(1..6)).collect();
    let mut store = ParamStore::new();
    let layer = Mlp::new(&mut store, rng, "m", ParamGroup::Encoder, &widths)?;
    let mut s = Layer(layer, store);
    jitter(&mut s, rng);
    let rows = rng.gen_range(1..4);
    let x = random(rng, rows, widths[0], 1.0);
    check_case(rng, &s, &[x], |g, s, v| s.0.forward(g, &s.1, v[0]))
}

fn gru(rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let (i, h, n) = (rng.gen_range(1..6), rng.gen_range(1..5), rng.gen_range(1..4));
    let mut store = ParamStore::new();
    let layer = Gru::new(&mut store, rng, "g", ParamGroup::Tom, i, h)?;
    let mut s = Layer(layer, store);
    jitter(&mut s, rng);
    let x = random(rng, n, i, 1.0);
    let h0 = random(rng, n, h, 1.0);
    check_case(rng, &s, &[x, h0], |g, s, v| s.0.forward(g, &s.1, v[0], v[1]))
}

fn attention(rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let (i, w, n) = (rng.gen_range(1..6), rng.gen_range(1..5), rng.gen_range(1..6));
    let mut store = ParamStore::new();
    let layer = Attention::new(&mut store, rng, "a", ParamGroup::Encoder, i, w)?;
    let mut s = Layer(layer, store);
    jitter(&mut s, rng);
    let present = if rng.gen_bool(0.8) { Some(mask(rng, n)) } else { None };
    let x = random(rng, n, i, 1.0);
    check_case(rng, &s, &[x], move |g, s, v| s.0.forward(g, &s.1, v[0], present.as_deref()))
}

fn graph_propagation(rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let m = small_model(rng, Task::Msmtc);
    let n = rng.gen_range(2..5);
    let width = m.config.embed_dim + m.config.tom_hidden;
    let nodes = random(rng, n, width, 1.0);
    let rounds = m.config.graph_rounds;
    check_case(rng, &m, &[nodes], move |g, m, v| m.propagate_graph(g, v[0], rounds))
}

fn tom_heads(rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let m = small_model(rng, Task::Msmtc);
    let (n, t) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let enc = random(rng, t, m.config.embed_dim, 1.0);
    let eps = random(rng, n, m.config.tom_hidden, 1.0);
    check_case(rng, &m, &[enc, eps], |g, m, v| {
        let a = m.infer_goals(g, v[0], v[1])?;
        let b = m.infer_relation(g, v[0], v[1])?;
        g.concat_cols(&[a, b])
    })
}

/// Straight-through samples: backprop through the hard sample must equal
/// central differences of the relaxed softmax it stands in for.
fn gumbel_relaxed(rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let (i, n) = (rng.gen_range(1..5), rng.gen_range(1..5));
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, rng, "e", ParamGroup::Sender, i, 2)?;
    let mut s = Layer(layer, store);
    jitter(&mut s, rng);
    let noise = sample_noise(rng, n, 2);
    let tau = rng.gen_range(0.5..2.0);
    let x = random(rng, n, i, 1.0);

    let mut g = Graph::new(GroupMask::ALL);
    let xv = g.input(x.clone())?;
    let logits = s.0.forward(&mut g, &s.1, xv)?;
    let st = gumbel_softmax(&mut g, logits, &noise, tau)?;
    let out = g.value(st);
    let one_hot = (0..n).all(|r| out.row(r).iter().filter(|v| **v == 1.0).count() == 1 && out.row(r).iter().sum::<f64>() == 1.0);
    let w = random(rng, n, 2, 1.0);
    let loss = weighted(&mut g, st, &w)?;
    let grads = g.backward(loss)?;

    let relaxed = |s: &Layer<Dense>, x: &Matrix| -> Result<f64> {
        let mut g = Graph::inference();
        let xv = g.constant(x.clone())?;
        let l = s.0.forward(&mut g, &s.1, xv)?;
        let l = g.value(l).clone();
        let mut total = 0.0;
        for r in 0..n {
            let a = (l.get(r, 0) + noise.get(r, 0)) / tau;
            let b = (l.get(r, 1) + noise.get(r, 1)) / tau;
            let top = a.max(b);
            let (ea, eb) = ((a - top).exp(), (b - top).exp());
            total += w.get(r, 0) * ea / (ea + eb) + w.get(r, 1) * eb / (ea + eb);
        }
        Ok(total)
    };

    let mut worst: f64 = if one_hot { 0.0 } else { f64::INFINITY };
    for e in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[e] += STEP;
        let up = relaxed(&s, &xp)?;
        xp.data_mut()[e] -= 2.0 * STEP;
        let down = relaxed(&s, &xp)?;
        let analytic = grads.wrt(xv).map_or(0.0, |m| m.data()[e]);
        worst = worst.max(relative_error(analytic, (up - down) / (2.0 * STEP)));
    }
    Ok((x.len(), worst))
}

fn actor_head(rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let task = if rng.gen_bool(0.5) { Task::Msmtc } else { Task::Cn };
    let m = small_model(rng, task);
    let t = rng.gen_range(1..5);
    let visible = mask(rng, t);
    let goal = match task {
        Task::Msmtc => Goal::Multi((0..t).map(|_| rng.gen_bool(0.5)).collect()),
        Task::Cn => {
            let vis: Vec<usize> = (0..t).filter(|q| visible[*q]).collect();
            Goal::One(vis[rng.gen_range(0..vis.len())])
        }
    };
    let feature = random(rng, t, m.config.embed_dim + 2, 1.0);
    let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    check_case(rng, &m, &[feature], move |g, m, v| {
        let logits = m.goal_logits(g, v[0])?;
        let lp = m.goal_log_prob(g, logits, &visible, &goal)?;
        let h = m.goal_entropy(g, logits, &visible)?;
        let lp = g.scale(lp, a)?;
        let h = g.scale(h, b)?;
        g.add(lp, h)
    })
}

fn critic_head(rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let m = small_model(rng, Task::Msmtc);
    let (n, t) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let features: Vec<Matrix> = (0..n).map(|_| random(rng, t, m.config.embed_dim + 2, 1.0)).collect();
    check_case(rng, &m, &features, |g, m, v| m.critic_value(g, v))
}

pub const LAYERS: &[(&str, CaseFn)] = &[
    ("dense", dense),
    ("mlp", mlp),
    ("gru", gru),
    ("attention", attention),
    ("graph propagation", graph_propagation),
    ("theory-of-mind heads", tom_heads),
    ("gumbel relaxed path", gumbel_relaxed),
    ("actor head", actor_head),
    ("critic head", critic_head),
];

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, case) in LAYERS {
        let mut worst: f64 = 0.0;
        let mut probed = 0;
        for _ in 0..CASES {
            match case(&mut rng) {
                Ok((p, w)) => {
                    probed += p;
                    worst = worst.max(w);
                }
                Err(e) => return Outcome::fail(format!("{name}: {e}")),
            }
        }
        pass &= worst < TOLERANCE;
        parts.push(format!("{name} {worst:.1e} ({CASES} cases, {probed} entries)"));
    }
    Outcome::new(pass, format!("worst relative error < {TOLERANCE:.0e}: {}", parts.join("; ")))
}
