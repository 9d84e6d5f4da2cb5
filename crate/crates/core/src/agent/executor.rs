use alloc::vec::Vec;

use super::Goal;
use crate::cn::MoveAction;
use crate::geometry::Observation;
use crate::math::{self, PI, TAU};
use crate::msmtc::SensorAction;

/// Heading error below which a sensor stays put (2.5 degrees).
pub const STAY_TOLERANCE: f64 = PI / 72.0;

/// Rotates toward the middle of the smallest arc holding every chosen,
/// visible target. Stays when nothing chosen is visible or the heading
/// error is within [`STAY_TOLERANCE`].
pub fn executor_msmtc(obs: &Observation, goal: &Goal) -> SensorAction {
    let mut bearings: Vec<f64> = (0..obs.len())
        .filter(|q| obs.visible[*q] && goal.chooses(*q))
        .map(|q| obs.rows[q][3])
        .collect();
    if bearings.is_empty() {
        return SensorAction::Stay;
    }
    bearings.sort_by(f64::total_cmp);
    // The minimal covering arc starts right after the widest gap.
    let k = bearings.len();
    let mut start = 0;
    let mut widest = bearings[0] + TAU - bearings[k - 1];
    for i in 1..k {
        let gap = bearings[i] - bearings[i - 1];
        if gap > widest {
            widest = gap;
            start = i;
        }
    }
    let span = TAU - widest;
    let mid = crate::geometry::wrap(bearings[start] + span / 2.0);
    if mid.abs() <= STAY_TOLERANCE {
        SensorAction::Stay
    } else if mid > 0.0 {
        SensorAction::RotLeft
    } else {
        SensorAction::RotRight
    }
}

/// Moves along the axis with the larger displacement to the chosen
/// landmark, preferring the x-axis on ties.
pub fn executor_cn(obs: &Observation, goal: &Goal) -> MoveAction {
    let q = match goal {
        Goal::One(q) => *q,
        Goal::Multi(v) => v.iter().position(|x| *x).unwrap_or(0),
    };
    let (dx, dy) = match obs.rows.get(q) {
        Some(row) if obs.visible[q] => (row[2] * math::cos(row[3]), row[2] * math::sin(row[3])),
        _ => (0.0, 0.0),
    };
    if dx.abs() >= dy.abs() {
        if dx >= 0.0 {
            MoveAction::Right
        } else {
            MoveAction::Left
        }
    } else if dy > 0.0 {
        MoveAction::Up
    } else {
        MoveAction::Down
    }
}
