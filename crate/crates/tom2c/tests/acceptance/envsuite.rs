//! Environment properties on seeded random states.

use std::f64::consts::PI;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tom2c_core::cn::{cn_reward, Body, CnEnv, CnState, MoveAction};
use tom2c_core::geometry::{segment_blocked, MotionKind};
use tom2c_core::msmtc::{covered, msmtc_reward, MsmtcEnv, MsmtcState, SensorAction};
use tom2c_core::{EnvConfig, Obstacle, Pose2D, TargetState, TeamEnv, Vec2};

use crate::Outcome;

fn point(rng: &mut ChaCha8Rng) -> Vec2 {
    Vec2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))
}

fn sampled_blocked(p: Vec2, q: Vec2, o: &Obstacle) -> bool {
    (0..1000).any(|k| {
        let t = k as f64 / 999.0;
        Vec2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)).distance(o.center) <= o.radius
    })
}

fn occlusion(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let cases = 10_000;
    let mut wrong = 0;
    for _ in 0..cases {
        let (p, q) = (point(rng), point(rng));
        let o = Obstacle { center: point(rng), radius: rng.gen_range(0.01..0.3) };
        wrong += usize::from(segment_blocked(p, q, &o) != sampled_blocked(p, q, &o));
    }
    (cases, wrong)
}

fn coverage_state(rng: &mut ChaCha8Rng, n: usize, m: usize) -> MsmtcState {
    let sensors = (0..n).map(|_| Pose2D::at(point(rng), rng.gen_range(-PI..PI)).unwrap()).collect();
    let targets = (0..m)
        .map(|_| TargetState { position: point(rng), motion: MotionKind::RandomWalk, destination: None, speed: 0.01 })
        .collect();
    let obstacles = (0..2).map(|_| Obstacle { center: point(rng), radius: rng.gen_range(0.05..0.15) }).collect();
    MsmtcState { sensors, targets, obstacles, step_count: 0 }
}

/// Violations of the coverage reward's value set, coverage implying
/// visibility and order invariance.
fn coverage_rewards(rng: &mut ChaCha8Rng) -> usize {
    let mut bad = 0;
    for _ in 0..2000 {
        let (n, m) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let cfg = EnvConfig::coverage(n, m);
        let s = coverage_state(rng, n, m);
        let r = msmtc_reward(&s, &cfg);
        let k = (0..m).filter(|q| s.sensors.iter().any(|a| covered(a, s.targets[*q].position, &s.obstacles, &cfg))).count();
        let want = if k == 0 { -0.1 } else { k as f64 / m as f64 };
        bad += usize::from((r - want).abs() > 1e-15);
        let vis = s.visibility(&cfg);
        for (i, a) in s.sensors.iter().enumerate() {
            for (q, t) in s.targets.iter().enumerate() {
                bad += usize::from(covered(a, t.position, &s.obstacles, &cfg) && !vis[i][q]);
            }
        }
        let mut p = s.clone();
        p.sensors.shuffle(rng);
        p.targets.shuffle(rng);
        bad += usize::from(msmtc_reward(&p, &cfg) != r);
    }
    bad
}

fn navigation_rewards(rng: &mut ChaCha8Rng) -> usize {
    let mut bad = 0;
    for _ in 0..2000 {
        let n = rng.gen_range(1..6);
        let cfg = EnvConfig::navigation(n);
        let s = CnState {
            agents: (0..n).map(|_| Body { position: point(rng), velocity: Vec2::ZERO }).collect(),
            landmarks: (0..n).map(|_| point(rng)).collect(),
            step_count: 0,
        };
        let r = cn_reward(&s, &cfg);
        bad += usize::from(r > 0.0);
        let mut p = s.clone();
        p.agents.shuffle(rng);
        p.landmarks.shuffle(rng);
        bad += usize::from((cn_reward(&p, &cfg) - r).abs() > 1e-12);
        let mut exact = s.clone();
        exact.landmarks = (0..n).map(|k| Vec2::new(0.1 + 0.8 * k as f64 / n as f64, 0.3)).collect();
        for (a, l) in exact.agents.iter_mut().zip(&exact.landmarks) {
            a.position = *l;
        }
        bad += usize::from(cn_reward(&exact, &cfg) != 0.0);
    }
    bad
}

/// Episodes replayed twice from the same seed and action stream.
fn determinism(rng: &mut ChaCha8Rng) -> usize {
    let mut bad = 0;
    for _ in 0..50 {
        let seed = rng.gen();
        let cfg = EnvConfig::coverage(3, 4);
        let (mut a, mut b) = (MsmtcEnv::reset_episode(&cfg, seed).unwrap(), MsmtcEnv::reset_episode(&cfg, seed).unwrap());
        let ncfg = EnvConfig::navigation(3);
        let (mut c, mut d) = (CnEnv::reset_episode(&ncfg, seed).unwrap(), CnEnv::reset_episode(&ncfg, seed).unwrap());
        for _ in 0..100 {
            let act: Vec<SensorAction> = (0..3).map(|_| SensorAction::ALL[rng.gen_range(0..3)]).collect();
            bad += usize::from(a.step(&act).unwrap() != b.step(&act).unwrap());
            let mv: Vec<MoveAction> = (0..3).map(|_| MoveAction::ALL[rng.gen_range(0..4)]).collect();
            bad += usize::from(c.step(&mv).unwrap() != d.step(&mv).unwrap());
            bad += usize::from(a.state().sensors.iter().any(|s| !(s.yaw() > -PI && s.yaw() <= PI)));
        }
        bad += usize::from(a.state() != b.state() || c.state() != d.state());
    }
    bad
}

pub fn run() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (cases, wrong) = occlusion(&mut rng);
    let cov = coverage_rewards(&mut rng);
    let nav = navigation_rewards(&mut rng);
    let det = determinism(&mut rng);
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        wrong == 0 && cov == 0 && nav == 0 && det == 0 && secs < 60.0,
        format!(
            "occlusion {wrong}/{cases} disagreements with 1000-point sampling; coverage reward violations {cov}; \
             navigation reward violations {nav}; determinism violations {det}; {secs:.1} s < 60 s"
        ),
    )
}
