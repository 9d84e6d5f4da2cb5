use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tom2c_core::cn::{cn_reward, collision_count, Body, CnEnv, CnState, MoveAction};
use tom2c_core::geometry::{relative_obs, segment_blocked, visible, MotionKind};
use tom2c_core::msmtc::{covered, msmtc_reward, MsmtcEnv, MsmtcState, SensorAction, UNCOVERED_PENALTY};
use tom2c_core::{EnvConfig, Obstacle, Pose2D, TargetState, TeamEnv, Vec2};

fn point(rng: &mut ChaCha8Rng) -> Vec2 {
    Vec2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))
}

fn pose(rng: &mut ChaCha8Rng) -> Pose2D {
    let p = point(rng);
    Pose2D::new(p.x, p.y, rng.gen_range(-PI..PI)).unwrap()
}

fn random_state(seed: u64, n: usize, m: usize) -> MsmtcState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obstacles = (0..rng.gen_range(0..3))
        .map(|_| Obstacle { center: point(&mut rng), radius: rng.gen_range(0.05..0.15) })
        .collect();
    MsmtcState {
        sensors: (0..n).map(|_| pose(&mut rng)).collect(),
        targets: (0..m)
            .map(|_| TargetState { position: point(&mut rng), motion: MotionKind::RandomWalk, destination: None, speed: 0.01 })
            .collect(),
        obstacles,
        step_count: 0,
    }
}

fn cn_state(seed: u64, n: usize) -> CnState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CnState {
        agents: (0..n).map(|_| Body { position: point(&mut rng), velocity: Vec2::ZERO }).collect(),
        landmarks: (0..n).map(|_| point(&mut rng)).collect(),
        step_count: 0,
    }
}

/// Dense sampling of the segment against the disk.
fn sampled_blocked(p: Vec2, q: Vec2, o: &Obstacle) -> bool {
    (0..1000).any(|k| {
        let t = k as f64 / 999.0;
        let s = Vec2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y));
        s.distance(o.center) <= o.radius
    })
}

#[test]
fn occlusion_matches_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..2000 {
        let (p, q) = (point(&mut rng), point(&mut rng));
        let o = Obstacle { center: point(&mut rng), radius: rng.gen_range(0.01..0.3) };
        assert_eq!(segment_blocked(p, q, &o), sampled_blocked(p, q, &o), "{p:?} {q:?} {o:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn visibility_grows_with_radius(seed in any::<u64>(), r in 0.05f64..1.0, extra in 0.0f64..1.0) {
        let s = random_state(seed, 3, 4);
        for a in &s.sensors {
            for t in &s.targets {
                if visible(a, t.position, &s.obstacles, r) {
                    prop_assert!(visible(a, t.position, &s.obstacles, r + extra));
                }
            }
        }
    }

    #[test]
    fn bearing_shifts_with_yaw(seed in any::<u64>(), theta in -PI..PI) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = pose(&mut rng);
        let t = point(&mut rng);
        let (d0, b0) = relative_obs(&a, t);
        let mut turned = a;
        turned.rotate_by(theta);
        let (d1, b1) = relative_obs(&turned, t);
        prop_assert!((d0 - d1).abs() < 1e-12);
        let diff = (b0 - theta - b1).rem_euclid(2.0 * PI);
        prop_assert!(diff < 1e-9 || 2.0 * PI - diff < 1e-9, "{b0} {theta} {b1}");
    }

    #[test]
    fn coverage_reward_takes_defined_values(seed in any::<u64>(), n in 1usize..5, m in 1usize..6) {
        let cfg = EnvConfig::coverage(n, m);
        let s = random_state(seed, n, m);
        let r = msmtc_reward(&s, &cfg);
        let k = s.covered_count(&cfg);
        if k == 0 {
            prop_assert_eq!(r, UNCOVERED_PENALTY);
        } else {
            prop_assert!((r - k as f64 / m as f64).abs() < 1e-15);
        }
        for a in &s.sensors {
            for t in &s.targets {
                if covered(a, t.position, &s.obstacles, &cfg) {
                    prop_assert!(visible(a, t.position, &s.obstacles, cfg.sense_radius));
                }
            }
        }
    }

    #[test]
    fn coverage_reward_ignores_order(seed in any::<u64>(), rot_a in 0usize..4, rot_t in 0usize..5) {
        let cfg = EnvConfig::coverage(4, 5);
        let s = random_state(seed, 4, 5);
        let mut p = s.clone();
        p.sensors.rotate_left(rot_a);
        p.targets.rotate_left(rot_t);
        p.targets.swap(0, 4);
        prop_assert_eq!(msmtc_reward(&s, &cfg), msmtc_reward(&p, &cfg));
    }

    #[test]
    fn yaw_stays_in_range(seed in any::<u64>(), actions in proptest::collection::vec(0usize..3, 1..200)) {
        let cfg = EnvConfig { episode_length: 500, ..EnvConfig::coverage(2, 2) };
        let (mut env, _) = MsmtcEnv::reset(&cfg, seed).unwrap();
        for a in actions {
            let act = SensorAction::ALL[a];
            env.msmtc_step(&[act, act]).unwrap();
            for s in &env.state().sensors {
                prop_assert!(s.yaw() > -PI && s.yaw() <= PI);
            }
        }
    }

    #[test]
    fn open_arena_sees_everything(seed in any::<u64>()) {
        let cfg = EnvConfig { n_obstacles: 0, sense_radius: 2f64.sqrt(), ..EnvConfig::coverage(3, 4) };
        let (_, obs) = MsmtcEnv::reset(&cfg, seed).unwrap();
        for o in obs {
            prop_assert!(o.visible.iter().all(|v| *v));
            prop_assert!(o.rows.iter().all(|r| r.iter().any(|x| *x != 0.0)));
        }
    }

    #[test]
    fn navigation_reward_is_nonpositive(seed in any::<u64>(), n in 1usize..5) {
        let cfg = EnvConfig::navigation(n);
        let s = cn_state(seed, n);
        prop_assert!(cn_reward(&s, &cfg) <= 0.0);
    }

    #[test]
    fn navigation_reward_zero_on_perfect_assignment(seed in any::<u64>(), n in 1usize..5) {
        let cfg = EnvConfig::navigation(n);
        let mut s = cn_state(seed, n);
        s.landmarks = (0..n).map(|k| Vec2::new(0.1 + 0.8 * k as f64 / n as f64, 0.5)).collect();
        for (a, l) in s.agents.iter_mut().zip(&s.landmarks) {
            a.position = *l;
        }
        prop_assert_eq!(collision_count(&s, cfg.collision_diameter), 0);
        prop_assert_eq!(cn_reward(&s, &cfg), 0.0);
        s.agents[0].position = Vec2::new(s.agents[0].position.x, 0.9);
        prop_assert!(cn_reward(&s, &cfg) < 0.0);
    }

    #[test]
    fn navigation_reward_ignores_order(seed in any::<u64>(), rot in 0usize..4) {
        let cfg = EnvConfig::navigation(4);
        let s = cn_state(seed, 4);
        let mut p = s.clone();
        p.agents.rotate_left(rot);
        p.landmarks.reverse();
        prop_assert!((cn_reward(&s, &cfg) - cn_reward(&p, &cfg)).abs() < 1e-12);
    }

    #[test]
    fn coverage_is_deterministic(seed in any::<u64>(), actions in proptest::collection::vec(0usize..3, 1..60)) {
        let cfg = EnvConfig::coverage(3, 3);
        let (mut a, _) = MsmtcEnv::reset(&cfg, seed).unwrap();
        let (mut b, _) = MsmtcEnv::reset(&cfg, seed).unwrap();
        for x in actions {
            let act = [SensorAction::ALL[x]; 3];
            prop_assert_eq!(a.msmtc_step(&act).unwrap(), b.msmtc_step(&act).unwrap());
        }
        prop_assert_eq!(a.state(), b.state());
    }

    #[test]
    fn navigation_is_deterministic(seed in any::<u64>(), actions in proptest::collection::vec(0usize..4, 1..60)) {
        let cfg = EnvConfig::navigation(3);
        let a0 = CnEnv::reset_episode(&cfg, seed).unwrap();
        let (mut a, mut b) = (a0.clone(), CnEnv::reset_episode(&cfg, seed).unwrap());
        prop_assert_eq!(a.state(), b.state());
        for x in actions {
            let act = [MoveAction::ALL[x]; 3];
            prop_assert_eq!(a.cn_step(&act).unwrap(), b.cn_step(&act).unwrap());
        }
    }
}
