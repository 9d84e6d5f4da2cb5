//! Parameterized building blocks: dense layers, MLPs, a GRU cell and
//! masked self-attention. Inputs are batches with one row per item.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::{Graph, ParamGroup, ParamId, ParamStore, Var};
use crate::math;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        group: ParamGroup,
        inputs: usize,
        outputs: usize,
    ) -> Result<Self> {
        let weight = store.add_weight(rng, &format!("{name}.w"), group, inputs, outputs)?;
        let bias = store.add_bias(&format!("{name}.b"), group, outputs)?;
        Ok(Self { weight, bias, inputs, outputs })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }
}

/// Dense layers with `tanh` between them; the last layer is linear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `widths` lists input, hidden and output sizes.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        group: ParamGroup,
        widths: &[usize],
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, rng, &format!("{name}.{i}"), group, w[0], w[1]))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h)?;
            if i + 1 < self.layers.len() {
                h = g.tanh(h)?;
            }
        }
        Ok(h)
    }
}

/// Gated recurrent unit:
/// `z = s(x Wz + h Uz + bz)`, `r = s(x Wr + h Ur + br)`,
/// `n = tanh(x Wn + (r * h) Un + bn)`, `h' = (1 - z) * n + z * h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gru {
    input_update: Dense,
    input_reset: Dense,
    input_new: Dense,
    hidden_update: ParamId,
    hidden_reset: ParamId,
    hidden_new: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        group: ParamGroup,
        inputs: usize,
        hidden: usize,
    ) -> Result<Self> {
        Ok(Self {
            input_update: Dense::new(store, rng, &format!("{name}.z"), group, inputs, hidden)?,
            input_reset: Dense::new(store, rng, &format!("{name}.r"), group, inputs, hidden)?,
            input_new: Dense::new(store, rng, &format!("{name}.n"), group, inputs, hidden)?,
            hidden_update: store.add_weight(rng, &format!("{name}.uz"), group, hidden, hidden)?,
            hidden_reset: store.add_weight(rng, &format!("{name}.ur"), group, hidden, hidden)?,
            hidden_new: store.add_weight(rng, &format!("{name}.un"), group, hidden, hidden)?,
            inputs,
            hidden,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let uz = g.param(store, self.hidden_update);
        let ur = g.param(store, self.hidden_reset);
        let un = g.param(store, self.hidden_new);

        let xz = self.input_update.forward(g, store, x)?;
        let hz = g.matmul(h, uz)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z)?;

        let xr = self.input_reset.forward(g, store, x)?;
        let hr = g.matmul(h, ur)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r)?;

        let xn = self.input_new.forward(g, store, x)?;
        let rh = g.mul(r, h)?;
        let hn = g.matmul(rh, un)?;
        let n = g.add(xn, hn)?;
        let n = g.tanh(n)?;

        let keep = g.one_minus(z)?;
        let fresh = g.mul(keep, n)?;
        let carried = g.mul(z, h)?;
        g.add(fresh, carried)
    }
}

/// Single-head scaled dot-product self-attention over rows.
///
/// Rows whose `present` flag is false are excluded as keys and produce
/// zero output. Row order never affects a row's result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attention {
    query: Dense,
    key: Dense,
    value: Dense,
    pub width: usize,
}

impl Attention {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        group: ParamGroup,
        inputs: usize,
        width: usize,
    ) -> Result<Self> {
        Ok(Self {
            query: Dense::new(store, rng, &format!("{name}.q"), group, inputs, width)?,
            key: Dense::new(store, rng, &format!("{name}.k"), group, inputs, width)?,
            value: Dense::new(store, rng, &format!("{name}.v"), group, inputs, width)?,
            width,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, present: Option<&[bool]>) -> Result<Var> {
        let q = self.query.forward(g, store, x)?;
        let k = self.key.forward(g, store, x)?;
        let v = self.value.forward(g, store, x)?;
        let kt = g.transpose(k)?;
        let scores = g.matmul(q, kt)?;
        let scores = g.scale(scores, 1.0 / math::sqrt(self.width as f64))?;
        let weights = g.softmax_rows(scores, present)?;
        let mixed = g.set_matmul(weights, v)?;
        match present {
            Some(p) => g.mask_rows(mixed, p),
            None => Ok(mixed),
        }
    }
}
