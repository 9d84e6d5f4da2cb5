use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::Matrix;
use crate::math;
use crate::{Error, Result};

/// Which part of the model a parameter belongs to.
///
/// `Tom` is trained only by the supervised theory-of-mind losses; every
/// other group is trained by reinforcement learning. `Sender` is also the
/// only group touched by communication-reduction tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder,
    Tom,
    Sender,
    Actor,
    Critic,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] =
        [ParamGroup::Encoder, ParamGroup::Tom, ParamGroup::Sender, ParamGroup::Actor, ParamGroup::Critic];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Encoder => "encoder",
            ParamGroup::Tom => "tom",
            ParamGroup::Sender => "sender",
            ParamGroup::Actor => "actor",
            ParamGroup::Critic => "critic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }
}

/// A set of [`ParamGroup`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GroupMask(u8);

impl GroupMask {
    pub const NONE: GroupMask = GroupMask(0);
    pub const ALL: GroupMask = GroupMask(0b1_1111);

    pub fn only(g: ParamGroup) -> Self {
        GroupMask(g.bit())
    }

    /// `theta_ToM`.
    pub fn tom() -> Self {
        Self::only(ParamGroup::Tom)
    }

    /// `theta_other`: everything the RL loss trains.
    pub fn other() -> Self {
        GroupMask(Self::ALL.0 & !ParamGroup::Tom.bit())
    }

    pub fn sender() -> Self {
        Self::only(ParamGroup::Sender)
    }

    pub fn contains(self, g: ParamGroup) -> bool {
        self.0 & g.bit() != 0
    }

    pub fn union(self, other: GroupMask) -> Self {
        GroupMask(self.0 | other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Matrix,
    pub grad: Matrix,
    /// Set when a backward pass accumulated into `grad` since the last zeroing.
    pub has_grad: bool,
}

/// Named parameter tensors. Names are unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, group: ParamGroup, value: Matrix) -> Result<ParamId> {
        if self.find(name).is_some() {
            return Err(Error::Invalid(format!("duplicate parameter name {name}")));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("parameter initialization"));
        }
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Param { name: name.into(), group, value, grad, has_grad: false });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Weight matrix drawn uniformly from +-sqrt(6 / (fan_in + fan_out)).
    pub fn add_weight(
        &mut self,
        rng: &mut impl Rng,
        name: &str,
        group: ParamGroup,
        fan_in: usize,
        fan_out: usize,
    ) -> Result<ParamId> {
        let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
        self.add(name, group, Matrix::from_vec(fan_in, fan_out, data)?)
    }

    pub fn add_bias(&mut self, name: &str, group: ParamGroup, width: usize) -> Result<ParamId> {
        self.add(name, group, Matrix::zeros(1, width))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &Matrix) {
        let p = &mut self.params[id.0];
        p.grad.add_assign(grad);
        p.has_grad = true;
    }

    pub fn zero_grad(&mut self, mask: GroupMask) {
        for p in self.params.iter_mut().filter(|p| mask.contains(p.group)) {
            p.grad.fill(0.0);
            p.has_grad = false;
        }
    }

    pub fn any_grad(&self, mask: GroupMask) -> bool {
        self.params.iter().any(|p| mask.contains(p.group) && p.has_grad)
    }

    /// Squared L2 norm of the gradients in `mask`.
    pub fn grad_norm_sq(&self, mask: GroupMask) -> f64 {
        self.params
            .iter()
            .filter(|p| mask.contains(p.group))
            .flat_map(|p| p.grad.data().iter())
            .map(|g| g * g)
            .sum()
    }

    /// Scales every gradient in `mask` so their joint norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, mask: GroupMask, max_norm: f64) -> f64 {
        let norm = math::sqrt(self.grad_norm_sq(mask));
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for p in self.params.iter_mut().filter(|p| mask.contains(p.group)) {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= k);
            }
        }
        norm
    }

    /// Copies values from `other` for every parameter whose name and shape match.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        for p in self.params.iter_mut() {
            let src = other
                .params
                .iter()
                .find(|q| q.name == p.name)
                .ok_or_else(|| Error::Invalid(format!("missing parameter {}", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::Shape { op: "load_values", left: p.value.shape(), right: src.value.shape() });
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}
