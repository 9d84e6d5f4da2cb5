//! Tape of matrix operations with reverse-mode gradients.
//!
//! Every operation appends a node holding its forward value. A node
//! requires a gradient iff one of its inputs does; parameter leaves require
//! one iff their group is in the graph's trainable mask. Forward values are
//! checked for NaN/Inf and a non-finite result aborts the operation.

use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{set_sum, Matrix};
use super::params::{GroupMask, ParamId, ParamStore};
use crate::math;
use crate::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    SetMatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    MaxRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Transpose(Var),
    RepeatRows(Var),
    MaskedFill(Var, Vec<bool>),
    Clamp(Var, f64, f64),
    StraightThrough(Var),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Gradients of one backward pass, indexed by node.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
    trainable: GroupMask,
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape { op, left: a.shape(), right: b.shape() }
}

impl Graph {
    /// New tape; parameters in `trainable` receive gradients.
    pub fn new(trainable: GroupMask) -> Self {
        Self { nodes: Vec::new(), params: Vec::new(), trainable }
    }

    /// Tape with no trainable parameters, for rollouts and evaluation.
    pub fn inference() -> Self {
        Self::new(GroupMask::NONE)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Input leaf whose gradient is tracked (finite-difference checks).
    pub fn input(&mut self, value: Matrix) -> Result<Var> {
        self.push(value, Op::Leaf, true, "input")
    }

    /// Binds a parameter; repeated calls return the same leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(Some(v)) = self.params.get(id.0) {
            return *v;
        }
        let p = store.get(id);
        let rg = self.trainable.contains(p.group);
        self.nodes.push(Node { value: p.value.clone(), op: Op::Param, requires_grad: rg });
        let v = Var(self.nodes.len() - 1);
        if self.params.len() <= id.0 {
            self.params.resize(id.0 + 1, None);
        }
        self.params[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let out = av.matmul(bv);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg, "matmul")
    }

    /// Matrix product whose inner reduction is order-independent, so that
    /// permuting the rows of `b` together with the columns of `a` leaves
    /// the result bit-identical.
    pub fn set_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("set_matmul", av, bv));
        }
        let (n, k, m) = (av.rows(), av.cols(), bv.cols());
        let mut out = Matrix::zeros(n, m);
        let mut terms = vec![0.0; k];
        for i in 0..n {
            for j in 0..m {
                for (kk, t) in terms.iter_mut().enumerate() {
                    *t = av.get(i, kk) * bv.get(kk, j);
                }
                out.set(i, j, set_sum(&mut terms));
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::SetMatMul(a, b), rg, "set_matmul")
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        Matrix::from_vec(av.rows(), av.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Sub(a, b), rg, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Mul(a, b), rg, "mul")
    }

    /// Adds the `1 x c` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(shape_err("add_row", av, rv));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *o += *b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(out, Op::AddRow(a, row), rg, "add_row")
    }

    /// Multiplies `a` by the `1 x 1` variable `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.shape() != (1, 1) {
            return Err(shape_err("mul_scalar", self.value(a), sv));
        }
        let k = sv.item();
        let out = self.value(a).map(|x| x * k);
        let rg = self.rg(a) || self.rg(s);
        self.push(out, Op::MulScalar(a, s), rg, "mul_scalar")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * k);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, k), rg, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + k);
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg, "add_scalar")
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let n = self.scale(a, -1.0)?;
        self.add_scalar(n, 1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(math::sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg, "sigmoid")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(math::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg, "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg, "relu")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(math::exp);
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg, "exp")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(math::ln);
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg, "log")
    }

    /// Row-wise softmax. Columns with `mask[c] == false` get probability
    /// zero; a row with no unmasked column is all zeros. The normalizer is
    /// an order-independent sum.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        if let Some(m) = mask {
            if m.len() != cols {
                return Err(Error::Shape { op: "softmax_rows", left: av.shape(), right: (1, m.len()) });
            }
        }
        let keep = |c: usize| mask.is_none_or(|m| m[c]);
        let mut out = Matrix::zeros(av.rows(), cols);
        let mut terms = Vec::with_capacity(cols);
        for r in 0..av.rows() {
            let row = av.row(r);
            let mx = (0..cols).filter(|c| keep(*c)).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                continue;
            }
            terms.clear();
            for (c, v) in row.iter().enumerate() {
                let e = if keep(c) { math::exp(v - mx) } else { 0.0 };
                out.set(r, c, e);
                terms.push(e);
            }
            let z = set_sum(&mut terms);
            out.row_mut(r).iter_mut().for_each(|x| *x /= z);
        }
        let rg = self.rg(a);
        self.push(out, Op::Softmax(a), rg, "softmax_rows")
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Matrix::scalar(s), Op::SumAll(a), rg, "sum_all")
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::Invalid("mean of an empty tensor".into()));
        }
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Column sums (`r x c -> 1 x c`), order-independent over rows.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let mut out = Matrix::zeros(1, av.cols());
        let mut terms = vec![0.0; av.rows()];
        for c in 0..av.cols() {
            for (r, t) in terms.iter_mut().enumerate() {
                *t = av.get(r, c);
            }
            out.set(0, c, set_sum(&mut terms));
        }
        let rg = self.rg(a);
        self.push(out, Op::SumRows(a), rg, "sum_rows")
    }

    /// Column means (`r x c -> 1 x c`).
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let r = self.value(a).rows();
        if r == 0 {
            return Err(Error::Invalid("mean over zero rows".into()));
        }
        let s = self.sum_rows(a)?;
        self.scale(s, 1.0 / r as f64)
    }

    /// Row sums (`r x c -> r x 1`).
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let data = (0..av.rows()).map(|r| av.row(r).iter().sum()).collect();
        let out = Matrix::from_vec(av.rows(), 1, data)?;
        let rg = self.rg(a);
        self.push(out, Op::SumCols(a), rg, "sum_cols")
    }

    /// Column maxima (`r x c -> 1 x c`); the gradient goes to the first maximal row.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rows() == 0 {
            return Err(Error::Invalid("max over zero rows".into()));
        }
        let mut out = Matrix::zeros(1, av.cols());
        let mut arg = vec![0; av.cols()];
        for c in 0..av.cols() {
            let mut best = 0;
            for r in 1..av.rows() {
                if av.get(r, c) > av.get(best, c) {
                    best = r;
                }
            }
            arg[c] = best;
            out.set(0, c, av.get(best, c));
        }
        let rg = self.rg(a);
        self.push(out, Op::MaxRows(a, arg), rg, "max_rows")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |p| self.value(*p).rows());
        let mut cols = 0;
        for p in parts {
            let v = self.value(*p);
            if v.rows() != rows {
                return Err(Error::Shape { op: "concat_cols", left: (rows, cols), right: v.shape() });
            }
            cols += v.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let v = self.value(*p);
            for r in 0..rows {
                out.row_mut(r)[off..off + v.cols()].copy_from_slice(v.row(r));
            }
            off += v.cols();
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(out, Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |p| self.value(*p).cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = self.value(*p);
            if v.cols() != cols {
                return Err(Error::Shape { op: "concat_rows", left: (rows, cols), right: v.shape() });
            }
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(out, Op::ConcatRows(parts.to_vec()), rg, "concat_rows")
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.rows() {
            return Err(Error::Shape { op: "slice_rows", left: av.shape(), right: (start, len) });
        }
        let c = av.cols();
        let out = Matrix::from_vec(len, c, av.data()[start * c..(start + len) * c].to_vec())?;
        let rg = self.rg(a);
        self.push(out, Op::SliceRows(a, start), rg, "slice_rows")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.cols() {
            return Err(Error::Shape { op: "slice_cols", left: av.shape(), right: (start, len) });
        }
        let mut out = Matrix::zeros(av.rows(), len);
        for r in 0..av.rows() {
            out.row_mut(r).copy_from_slice(&av.row(r)[start..start + len]);
        }
        let rg = self.rg(a);
        self.push(out, Op::SliceCols(a, start), rg, "slice_cols")
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.slice_rows(a, r, 1)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg, "transpose")
    }

    /// Stacks the `1 x c` row `a` into `n x c`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let av = self.value(a);
        if av.rows() != 1 {
            return Err(Error::Shape { op: "repeat_rows", left: av.shape(), right: (n, av.cols()) });
        }
        let mut data = Vec::with_capacity(n * av.cols());
        for _ in 0..n {
            data.extend_from_slice(av.data());
        }
        let out = Matrix::from_vec(n, av.cols(), data)?;
        let rg = self.rg(a);
        self.push(out, Op::RepeatRows(a), rg, "repeat_rows")
    }

    /// Replaces entries where `mask` is true by `value`; those entries pass
    /// no gradient.
    pub fn masked_fill(&mut self, a: Var, mask: &[bool], value: f64) -> Result<Var> {
        let av = self.value(a);
        if mask.len() != av.len() {
            return Err(Error::Shape { op: "masked_fill", left: av.shape(), right: (1, mask.len()) });
        }
        let mut out = av.clone();
        for (o, m) in out.data_mut().iter_mut().zip(mask) {
            if *m {
                *o = value;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::MaskedFill(a, mask.to_vec()), rg, "masked_fill")
    }

    /// Zeroes whole rows of `a` where `keep[r]` is false.
    pub fn mask_rows(&mut self, a: Var, keep: &[bool]) -> Result<Var> {
        let cols = self.value(a).cols();
        let mask: Vec<bool> = keep.iter().flat_map(|k| core::iter::repeat_n(!*k, cols)).collect();
        self.masked_fill(a, &mask, 0.0)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(out, Op::Clamp(a, lo, hi), rg, "clamp")
    }

    /// Same data in row-major order with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let av = self.value(a);
        if rows * cols != av.len() {
            return Err(Error::Shape { op: "reshape", left: av.shape(), right: (rows, cols) });
        }
        let out = Matrix::from_vec(rows, cols, av.data().to_vec())?;
        let rg = self.rg(a);
        self.push(out, Op::Reshape(a), rg, "reshape")
    }

    /// Forward value `hard`, gradient passed unchanged to `soft`.
    pub fn straight_through(&mut self, soft: Var, hard: Matrix) -> Result<Var> {
        let sv = self.value(soft);
        if sv.shape() != hard.shape() {
            return Err(shape_err("straight_through", sv, &hard));
        }
        let rg = self.rg(soft);
        self.push(hard, Op::StraightThrough(soft), rg, "straight_through")
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Shape { op: "backward", left: lv.shape(), right: (1, 1) });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Grads { grads })
    }

    /// Reverse pass that adds parameter gradients into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward(loss)?;
        for (pid, var) in self.params.iter().enumerate() {
            let Some(v) = var else { continue };
            if !self.nodes[v.0].requires_grad {
                continue;
            }
            let id = ParamId(pid);
            match grads.wrt(*v) {
                Some(g) => store.accumulate(id, g),
                None => {
                    let (r, c) = self.nodes[v.0].value.shape();
                    store.accumulate(id, &Matrix::zeros(r, c));
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, d: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(x) => x.add_assign(&d),
                slot => *slot = Some(d),
            }
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) | Op::SetMatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul_t(val(*b)));
                }
                if self.rg(*b) {
                    acc(*b, val(*a).t_matmul(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, elementwise(g, bv, |x, y| x * y));
                acc(*b, elementwise(g, av, |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, column_sums(g));
            }
            Op::MulScalar(a, s) => {
                let k = val(*s).item();
                acc(*a, g.map(|x| x * k));
                let ds: f64 = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).sum();
                acc(*s, Matrix::scalar(ds));
            }
            Op::Scale(a, k) => acc(*a, g.map(|x| x * k)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Sigmoid(a) => acc(*a, elementwise(g, y, |d, s| d * s * (1.0 - s))),
            Op::Tanh(a) => acc(*a, elementwise(g, y, |d, t| d * (1.0 - t * t))),
            Op::Relu(a) => acc(*a, elementwise(g, val(*a), |d, x| if x > 0.0 { d } else { 0.0 })),
            Op::Exp(a) => acc(*a, elementwise(g, y, |d, e| d * e)),
            Op::Log(a) => acc(*a, elementwise(g, val(*a), |d, x| d / x)),
            Op::Softmax(a) => {
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for (c, o) in d.row_mut(r).iter_mut().enumerate() {
                        *o = yr[c] * (gr[c] - dot);
                    }
                }
                acc(*a, d);
            }
            Op::SumAll(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::filled(r, c, g.item()));
            }
            Op::SumRows(a) => {
                let (r, _) = val(*a).shape();
                let mut d = Vec::with_capacity(r * g.cols());
                for _ in 0..r {
                    d.extend_from_slice(g.data());
                }
                acc(*a, Matrix::from_vec(r, g.cols(), d).unwrap_or_else(|_| unreachable!()));
            }
            Op::SumCols(a) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i).iter_mut().for_each(|x| *x = g.get(i, 0));
                }
                acc(*a, d);
            }
            Op::MaxRows(a, arg) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for (col, row) in arg.iter().enumerate() {
                    d.set(*row, col, g.get(0, col));
                }
                acc(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let (r, c) = val(*p).shape();
                    if self.rg(*p) {
                        let mut d = Matrix::zeros(r, c);
                        for i in 0..r {
                            d.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                        }
                        acc(*p, d);
                    }
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let (r, c) = val(*p).shape();
                    if self.rg(*p) {
                        let d = g.data()[off * c..(off + r) * c].to_vec();
                        acc(*p, Matrix::from_vec(r, c, d).unwrap_or_else(|_| unreachable!()));
                    }
                    off += r;
                }
            }
            Op::SliceRows(a, start) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..g.rows() {
                    d.row_mut(start + i).copy_from_slice(g.row(i));
                }
                acc(*a, d);
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i)[*start..start + g.cols()].copy_from_slice(g.row(i));
                }
                acc(*a, d);
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::RepeatRows(a) => acc(*a, column_sums(g)),
            Op::MaskedFill(a, mask) => {
                let mut d = g.clone();
                for (x, m) in d.data_mut().iter_mut().zip(mask) {
                    if *m {
                        *x = 0.0;
                    }
                }
                acc(*a, d);
            }
            Op::Clamp(a, lo, hi) => {
                acc(*a, elementwise(g, val(*a), |d, x| if x > *lo && x < *hi { d } else { 0.0 }))
            }
            Op::StraightThrough(soft) => acc(*soft, g.clone()),
            Op::Reshape(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::from_vec(r, c, g.data().to_vec()).unwrap_or_else(|_| unreachable!()));
            }
        }
    }
}

fn elementwise(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).unwrap_or_else(|_| unreachable!())
}

fn column_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, x) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += *x;
        }
    }
    out
}
