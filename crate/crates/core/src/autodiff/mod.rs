//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.

mod adam;
mod graph;
pub mod gumbel;
pub mod layers;
mod matrix;
mod params;

pub use adam::{Adam, AdamConfig};
pub use graph::{Grads, Graph, Var};
pub use matrix::{set_sum, Matrix};
pub use params::{GroupMask, Param, ParamGroup, ParamId, ParamStore};
