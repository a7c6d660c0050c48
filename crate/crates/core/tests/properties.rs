mod common;

use std::sync::Arc;

use common::{bfs, brute_force_intercept, direct_spectrogram, dist, floyd_warshall, random_pose, random_trajectory};
use davnav::acoustics::{compute_spectrogram, render_source, AcousticParams, BinauralFrame};
use davnav::engine::{ActionMode, Decision, Engine, EpisodeConfig, EpisodeLog, Outcome, RawAction};
use davnav::gridmap::{
    action_distance, generate_map, geodesic_action_distance, geodesic_field, parse_map, AgentPose, Cell, GridMap,
    Heading, MapGenParams,
};
use davnav::metrics::{intercept_oracle, score_episode};
use davnav::protocol::{decode_observation, encode_observation, Envelope, Message};
use davnav::scenario::{apply_spec_augment, Augmentation, ScenarioConfig};
use davnav::soundbank::{synthesize_bank, SoundBank, Split};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_map() -> impl Strategy<Value = GridMap> {
    (3usize..9, 3usize..9, any::<u64>(), 0.0f64..0.45).prop_filter_map("needs a free cell", |(w, h, seed, density)| {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let occ: Vec<bool> = (0..w * h)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                r == 0 || c == 0 || r == h - 1 || c == w - 1 || rng.gen_bool(density)
            })
            .collect();
        GridMap::new(w, h, 0.5, occ, "arb").ok()
    })
}

fn arb_heading() -> impl Strategy<Value = Heading> {
    (0usize..4).prop_map(|i| Heading::ALL[i])
}

fn bank() -> Arc<SoundBank> {
    static BANK: std::sync::OnceLock<Arc<SoundBank>> = std::sync::OnceLock::new();
    BANK.get_or_init(|| Arc::new(synthesize_bank(7, 8, 16_000, 1.0).unwrap()))
        .clone()
}

fn small_world(seed: u64) -> Arc<GridMap> {
    let p = MapGenParams {
        width: 12,
        height: 12,
        rooms: 3,
        ..MapGenParams::default()
    };
    Arc::new(generate_map(seed, &p).unwrap())
}

fn raw(i: u8) -> RawAction {
    [RawAction::Forward, RawAction::RotateLeft, RawAction::RotateRight][i as usize % 3]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn geodesics_match_floyd_warshall(map in arb_map()) {
        let (cells, d) = floyd_warshall(&map);
        for (i, &a) in cells.iter().enumerate() {
            let f = geodesic_field(&map, a).unwrap();
            for (j, &b) in cells.iter().enumerate() {
                prop_assert_eq!(f.cells(b), d[i][j]);
                prop_assert_eq!(d[i][j], d[j][i]);
            }
        }
    }

    #[test]
    fn action_distance_bounds(map in arb_map(), h in arb_heading(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = AgentPose::new(random_pose(&mut rng, &map).cell, h);
        let field = bfs(&map, start.cell);
        for &goal in map.free_cells() {
            let a = action_distance(&map, start, goal).unwrap();
            let g = geodesic_action_distance(&map, start, goal).unwrap();
            match dist(&map, &field, goal) {
                None => prop_assert!(a.is_none() && g.is_none()),
                Some(cells) => {
                    let (a, g) = (a.unwrap(), g.unwrap());
                    prop_assert!(a >= cells);
                    prop_assert!(g >= a);
                    // at most two turns before the first move and one per corner after
                    prop_assert!(a <= 3 * cells + 2);
                }
            }
        }
    }

    #[test]
    fn documents_round_trip(map in arb_map()) {
        let doc = map.to_document();
        let back = parse_map(&doc).unwrap();
        prop_assert_eq!(back.to_document(), doc);
        prop_assert_eq!(back, map);
    }

    #[test]
    fn intercept_matches_exhaustive_search(map in arb_map(), seed in any::<u64>(), len in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = random_pose(&mut rng, &map);
        let traj = random_trajectory(&mut rng, &map, len);
        let got = intercept_oracle(&map, start, &traj).unwrap().earliest.map(|c| (c.t, c.cell, c.g_cells));
        prop_assert_eq!(got, brute_force_intercept(&map, start, &traj));
    }

    #[test]
    fn panning_is_mirror_symmetric(seed in any::<u64>(), az in -3.1f64..3.1, d in 0.0f64..20.0) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slice: Vec<f32> = (0..16_000).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let p = AcousticParams::default();
        let a = render_source(&slice, az, d, &p, 16_000);
        let b = render_source(&slice, -az, d, &p, 16_000);
        prop_assert_eq!(&a.left, &b.right);
        prop_assert_eq!(&a.right, &b.left);
    }

    #[test]
    fn level_falls_as_inverse_distance(d1 in 0.1f64..30.0, d2 in 0.1f64..30.0) {
        let slice: Vec<f32> = (0..16_000).map(|n| (n as f32 * 0.05).sin()).collect();
        let p = AcousticParams::default();
        let (l1, _) = render_source(&slice, 0.0, d1, &p, 16_000).rms();
        let (l2, _) = render_source(&slice, 0.0, d2, &p, 16_000).rms();
        prop_assert!((l1 / l2 - d2 / d1).abs() < 1e-5 * (d2 / d1));
    }

    #[test]
    fn spectrogram_is_sign_invariant_and_finite(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let left: Vec<f32> = (0..16_000).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let right: Vec<f32> = left.iter().map(|v| v * 0.3).collect();
        let f = BinauralFrame { left: left.clone(), right: right.clone(), sample_rate: 16_000 };
        let g = BinauralFrame {
            left: left.iter().map(|v| -v).collect(),
            right: right.iter().map(|v| -v).collect(),
            sample_rate: 16_000,
        };
        let a = compute_spectrogram(&f).unwrap();
        let b = compute_spectrogram(&g).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn masks_are_single_bounded_blocks(seed in any::<u64>(), kind in 0usize..4) {
        let kind = [Augmentation::None, Augmentation::TimeMask, Augmentation::FreqMask, Augmentation::Both][kind];
        let cfg = ScenarioConfig::for_rate(16_000);
        let mut s = davnav::acoustics::Spectrogram::zeros(65, 26, 16_000);
        s.values.iter_mut().for_each(|v| *v = 1.0);
        let m = apply_spec_augment(&s, kind, &mut ChaCha8Rng::seed_from_u64(seed), &cfg).unwrap();
        let zero_t: Vec<usize> = (0..26).filter(|&t| (0..65).all(|f| m.get(f, t, 0) == 0.0)).collect();
        let zero_f: Vec<usize> = (0..65).filter(|&f| (0..26).all(|t| m.get(f, t, 1) == 0.0)).collect();
        let contiguous = |v: &[usize]| v.windows(2).all(|w| w[1] == w[0] + 1);
        prop_assert!(zero_t.len() <= 12 && contiguous(&zero_t));
        prop_assert!(zero_f.len() <= 12 && contiguous(&zero_f));
        if kind == Augmentation::None {
            prop_assert_eq!(m, s);
        }
    }

    #[test]
    fn observation_wire_round_trip_is_bit_exact(bits in prop::collection::vec(any::<u32>(), 65 * 26 * 2), seed in any::<u64>()) {
        let map = small_world(seed % 16);
        let bank = bank();
        let start = AgentPose::new(map.free_cells()[0], Heading::North);
        let cfg = EpisodeConfig::new(&map, &bank, bank.ids(Split::Train)[0].clone(), start, seed);
        let (_, mut obs) = Engine::reset(map, bank, cfg).unwrap();
        obs.spectrogram.values = bits.iter().map(|b| f32::from_bits(*b)).collect();
        let line = Envelope::new(Message::Observation(encode_observation(&obs, &[obs.clone()]))).to_line();
        let Message::Observation(wire) = Envelope::parse(&line).unwrap() else { panic!("kind") };
        let (back, inter) = decode_observation(&wire).unwrap();
        let same = |a: &[f32], b: &[f32]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        prop_assert!(same(&back.spectrogram.values, &obs.spectrogram.values));
        prop_assert!(same(&inter[0].spectrogram.values, &obs.spectrogram.values));
        prop_assert_eq!(back.scan, obs.scan);
        prop_assert_eq!((back.collided, back.step_index), (obs.collided, obs.step_index));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn episodes_are_deterministic_and_replayable(seed in any::<u64>(), actions in prop::collection::vec(0u8..3, 1..60), p in 0.0f64..1.0, complex in any::<bool>()) {
        let map = small_world(seed % 8);
        let bank = bank();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = random_pose(&mut rng, &map);
        let mut cfg = EpisodeConfig::new(&map, &bank, bank.ids(Split::Train)[0].clone(), start, seed);
        cfg.move_prob = p;
        cfg.scenario.complex_enabled = complex;
        let run = || -> EpisodeLog {
            let (mut e, _) = Engine::reset(map.clone(), bank.clone(), cfg.clone()).unwrap();
            for &a in &actions {
                e.step_raw(raw(a)).unwrap();
            }
            e.step_raw(RawAction::Stop).unwrap();
            e.log()
        };
        let a = run();
        let b = run();
        prop_assert_eq!(a.to_jsonl(), b.to_jsonl());
        let replayed = davnav::engine::replay(map.clone(), bank.clone(), &a).unwrap();
        prop_assert_eq!(replayed.to_jsonl(), a.to_jsonl());
        // success exactly when the Stop lands on the target's cell
        let last = a.records.last().unwrap();
        prop_assert_eq!(a.outcome == Outcome::Success, last.pose.cell == *a.trajectory.last().unwrap());
        let s = score_episode(&a, &map).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.dspl) && (0.0..=1.0).contains(&s.dsna));
        prop_assert!(a.records.len() <= cfg.step_limit);
    }

    #[test]
    fn static_reward_sum_is_signed_distance_change(seed in any::<u64>(), actions in prop::collection::vec(0u8..3, 1..80)) {
        let map = small_world(seed % 8);
        let bank = bank();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = random_pose(&mut rng, &map);
        let cfg = EpisodeConfig::new(&map, &bank, bank.ids(Split::Train)[0].clone(), start, seed);
        let (mut e, _) = Engine::reset(map.clone(), bank.clone(), cfg).unwrap();
        let field = bfs(&map, e.target().cell);
        let d0 = dist(&map, &field, start.cell).unwrap() as f64;
        let mut total = 0.0;
        for &a in &actions {
            total += e.step_raw(raw(a)).unwrap().reward;
        }
        let dt = dist(&map, &field, e.pose().cell).unwrap() as f64;
        let expected = 0.25 * (d0 - dt) - 0.01 * actions.len() as f64;
        prop_assert!((total - expected).abs() < 1e-9, "{} vs {}", total, expected);
    }

    #[test]
    fn waypoint_decisions_take_one_to_four_actions(seed in any::<u64>(), picks in prop::collection::vec(0u8..9, 1..40)) {
        let map = small_world(seed % 8);
        let bank = bank();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = EpisodeConfig::new(&map, &bank, bank.ids(Split::Train)[0].clone(), random_pose(&mut rng, &map), seed);
        cfg.mode = ActionMode::Waypoint;
        cfg.move_prob = 0.5;
        let (mut e, _) = Engine::reset(map, bank, cfg).unwrap();
        for &i in &picks {
            if e.is_done() {
                break;
            }
            let before = e.records().len();
            let r = e.step(Decision::Waypoint(i)).unwrap();
            prop_assert!((1..=4).contains(&r.info.raw_actions));
            prop_assert_eq!(e.records().len() - before, r.info.raw_actions);
            prop_assert_eq!(r.info.intermediate.len(), r.info.raw_actions - 1);
        }
    }
}

#[test]
fn spectrogram_matches_direct_dft() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let left: Vec<f32> = (0..16_000).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let right: Vec<f32> = (0..16_000)
        .map(|n| (2.0 * std::f32::consts::PI * 1000.0 * n as f32 / 16_000.0).sin())
        .collect();
    let spec = compute_spectrogram(&BinauralFrame {
        left: left.clone(),
        right: right.clone(),
        sample_rate: 16_000,
    })
    .unwrap();
    for (ch, x) in [(0, &left), (1, &right)] {
        let want = direct_spectrogram(x);
        assert_eq!((want.len(), want[0].len()), (65, 26));
        for (f, row) in want.iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                let got = spec.get(f, t, ch) as f64;
                assert!(
                    (got - v).abs() <= 1e-4 * v.max(1.0),
                    "bin {f} frame {t} ear {ch}: {got} vs {v}"
                );
            }
        }
    }
    // a 1 kHz tone peaks in row 8 (bin 32 of 257, every fourth kept)
    for t in 1..25 {
        let col: Vec<f32> = (0..65).map(|f| spec.get(f, t, 1)).collect();
        let peak = (0..65).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
        assert_eq!(peak, 8, "frame {t}");
    }
}

#[test]
fn spawn_cells_are_uniform() {
    // χ² goodness of fit over the free cells of a small open room
    let map = GridMap::open(6, 6, 0.5).unwrap();
    let agent = Cell::new(1, 1);
    let cells: Vec<Cell> = map.free_cells().iter().copied().filter(|&c| c != agent).collect();
    assert_eq!(cells.len(), 15);
    let n = 30_000;
    let mut counts = vec![0usize; cells.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..n {
        let t = davnav::dynamics::spawn_target(&mut rng, &map, agent, 0.2).unwrap();
        counts[cells.iter().position(|&c| c == t.cell).unwrap()] += 1;
    }
    let expected = n as f64 / cells.len() as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 14 degrees of freedom, 0.999 quantile ≈ 36.1
    assert!(chi2 < 36.1, "chi2 = {chi2}");
}
