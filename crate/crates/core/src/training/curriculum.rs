use crate::math;

pub const GAMMA_CAP: f64 = 0.9;
pub const LENGTH_CAP: usize = 100;

/// Episode length tied to the discount: `floor((gamma + 0.1) / 0.2) * 20`,
/// capped at [`LENGTH_CAP`]. The quotient is nudged by 1e-9 so that exact
/// multiples such as `gamma = 0.5` are not floored down by rounding.
pub fn episode_length_for(gamma: f64) -> usize {
    let steps = math::floor((gamma + 0.1) / 0.2 + 1e-9);
    ((steps.max(0.0) as usize) * 20).min(LENGTH_CAP)
}

/// One schedule step: `gamma <- min(gamma (1 + rate), 0.9)` and the
/// matching episode length.
pub fn curriculum_tick(gamma: f64, rate: f64) -> (f64, usize) {
    let next = (gamma * (1.0 + rate)).min(GAMMA_CAP);
    (next, episode_length_for(next))
}
