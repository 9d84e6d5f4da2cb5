use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{relative_obs, visible, EnvConfig};
use crate::msmtc::{MsmtcState, SensorAction};
use crate::{Error, Result};

/// Largest team the exhaustive search accepts (3^12 joint actions).
pub const HEURISTIC_MAX_AGENTS: usize = 12;

/// Objectives closer than this count as tied.
pub const HEURISTIC_TIE: f64 = 1e-9;

/// Which sensor-target pairs enter the search objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeuristicScope {
    /// Only pairs where the sensor can sense the target (radius and
    /// occlusion); targets nobody senses are ignored.
    #[default]
    Sensable,
    /// Every sensor-target pair.
    AllTargets,
}

/// Per sensor, per action, per target: post-step `|alpha|`, or infinity
/// for pairs outside `scope`.
fn bearing_costs(state: &MsmtcState, cfg: &EnvConfig, scope: HeuristicScope) -> Vec<[Vec<f64>; 3]> {
    state
        .sensors
        .iter()
        .map(|s| {
            let counted: Vec<bool> = state
                .targets
                .iter()
                .map(|t| scope == HeuristicScope::AllTargets || visible(s, t.position, &state.obstacles, cfg.sense_radius))
                .collect();
            SensorAction::ALL.map(|a| {
                let mut pose = *s;
                pose.rotate_by(a.yaw_delta());
                state
                    .targets
                    .iter()
                    .zip(&counted)
                    .map(|(t, c)| if *c { relative_obs(&pose, t.position).1.abs() } else { f64::INFINITY })
                    .collect()
            })
        })
        .collect()
}

fn objective_from(mins: &[f64]) -> f64 {
    mins.iter().filter(|x| x.is_finite()).sum()
}

/// `sum_j min_i |alpha_ij|` after applying `actions`, targets held still.
pub fn heuristic_objective(state: &MsmtcState, cfg: &EnvConfig, scope: HeuristicScope, actions: &[SensorAction]) -> f64 {
    let cost = bearing_costs(state, cfg, scope);
    let mins: Vec<f64> = (0..state.targets.len())
        .map(|j| {
            actions
                .iter()
                .enumerate()
                .map(|(i, a)| cost[i][*a as usize][j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    objective_from(&mins)
}

/// Exhaustive one-step search over all `3^n` joint rotations using the
/// global state. Ties (within [`HEURISTIC_TIE`]) go to the lexicographically
/// first joint action with `Stay < RotLeft < RotRight`, the first sensor
/// most significant.
pub fn heuristic_action(state: &MsmtcState, cfg: &EnvConfig) -> Result<Vec<SensorAction>> {
    heuristic_action_scoped(state, cfg, HeuristicScope::default())
}

pub fn heuristic_action_scoped(state: &MsmtcState, cfg: &EnvConfig, scope: HeuristicScope) -> Result<Vec<SensorAction>> {
    let n = state.sensors.len();
    if n == 0 {
        return Err(Error::Invalid("no sensors to steer".into()));
    }
    if n > HEURISTIC_MAX_AGENTS {
        return Err(Error::Config(format!(
            "exhaustive search supports at most {HEURISTIC_MAX_AGENTS} sensors, got {n}"
        )));
    }
    let cost = bearing_costs(state, cfg, scope);
    let mut digits = vec![0usize; n];
    let mut best = (f64::INFINITY, digits.clone());
    let mut mins = vec![0.0; state.targets.len()];
    for _ in 0..3usize.pow(n as u32) {
        mins.iter_mut().for_each(|x| *x = f64::INFINITY);
        for (i, a) in digits.iter().enumerate() {
            for (mn, c) in mins.iter_mut().zip(&cost[i][*a]) {
                if *c < *mn {
                    *mn = *c;
                }
            }
        }
        let obj = objective_from(&mins);
        if obj < best.0 - HEURISTIC_TIE {
            best = (obj, digits.clone());
        }
        // Odometer increment, last sensor least significant.
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < 3 {
                break;
            }
            *d = 0;
        }
    }
    Ok(best.1.into_iter().map(|a| SensorAction::ALL[a]).collect())
}
