//! Straight-through Gumbel-Softmax sampling.

use rand::Rng;

use super::{Graph, Matrix, Var};
use crate::math;
use crate::{Error, Result};

/// Standard Gumbel noise `-ln(-ln u)` with `u` uniform in `(0, 1)`.
pub fn sample_noise(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for x in m.data_mut() {
        let u: f64 = rng.gen::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        *x = -math::ln(-math::ln(u));
    }
    m
}

/// Row-wise one-hot of the argmax; ties go to the lowest column.
pub fn hard_one_hot(probs: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let row = probs.row(r);
        if row.is_empty() {
            continue;
        }
        let best = (1..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
        out.set(r, best, 1.0);
    }
    out
}

/// Samples one category per row of `logits` using pre-drawn `noise`.
///
/// The returned variable has the hard one-hot sample as its value and the
/// gradient of `softmax((logits + noise) / temperature)`.
pub fn gumbel_softmax(g: &mut Graph, logits: Var, noise: &Matrix, temperature: f64) -> Result<Var> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Config(alloc::format!("gumbel temperature must be positive, got {temperature}")));
    }
    let noise = g.constant(noise.clone())?;
    let perturbed = g.add(logits, noise)?;
    let scaled = g.scale(perturbed, 1.0 / temperature)?;
    let soft = g.softmax_rows(scaled, None)?;
    let hard = hard_one_hot(g.value(soft));
    g.straight_through(soft, hard)
}
