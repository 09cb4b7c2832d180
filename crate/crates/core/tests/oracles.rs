mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sebn::bayes::Evidence;
use sebn::curriculum::{update_distribution, update_partial, InitMode, TaskDistribution};
use sebn::estimator::{estimate_phi, EmConfig, RolloutRecord};
use sebn::learner::{EnvFactory, EpisodeLearner, GridFactory, QConfig, QLearner};
use sebn::megagrid::{bfs_plan, generate_env};
use sebn::search::{heuristic, select_candidates, SearchConfig, SearchMode};
use sebn::sebn::{assemble_sebn, fixtures, parse_spec, sample_outcomes};

fn random_evidence(rng: &mut ChaCha8Rng, net: &sebn::bayes::Network, skip: usize) -> Evidence {
    let mut e = Evidence::new();
    for v in 0..net.len() {
        if v != skip && rng.gen_bool(0.3) {
            e.insert(v, rng.gen_range(0..net.variable(v).domain_size));
        }
    }
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_inference_matches_enumeration(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = common::random_network(&mut rng, n);
        let joint = common::joint(&net);
        let q = rng.gen_range(0..n);
        let ev = random_evidence(&mut rng, &net, q);
        let exact = net.query_marginal(&ev, &[q]).unwrap();
        let brute = common::brute_marginal(&joint, net.variable(q).domain_size, q, &ev);
        for (a, b) in exact.values().iter().zip(&brute) {
            prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn wide_ibound_is_exact_and_narrow_is_a_distribution(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = common::random_network(&mut rng, n);
        let q = rng.gen_range(0..n);
        let ev = random_evidence(&mut rng, &net, q);
        let width = net.query_bucket_width(&ev, &[q]).max(1);
        let exact = net.query_marginal(&ev, &[q]).unwrap();
        let wide = net.wmb_query(&ev, &[q], width).unwrap();
        for (a, b) in exact.values().iter().zip(wide.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let narrow = net.wmb_query(&ev, &[q], 1).unwrap();
        prop_assert!((narrow.total() - 1.0).abs() < 1e-9);
        prop_assert!(narrow.values().iter().all(|p| p.is_finite() && *p >= 0.0));
    }

    #[test]
    fn smoothed_update_keeps_half_the_mass(fit in prop::collection::vec(0.0f64..1.0, 8), seed in any::<u64>()) {
        let tasks = common::doorkey_tasks();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..8).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let dist = TaskDistribution { support: tasks.clone(), weights: raw.iter().map(|w| w / total).collect(), generation: 3 };
        let scores: Vec<_> = tasks.iter().cloned().zip(fit.iter().copied()).collect();
        let up = update_distribution(&dist, &scores).unwrap();
        prop_assert!((up.distribution.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(up.distribution.generation, 4);
        for (new, old) in up.distribution.weights.iter().zip(&dist.weights) {
            prop_assert!(*new >= 0.5 * old - 1e-15);
        }
        let part = update_partial(&dist, &scores[..3]).unwrap();
        prop_assert!((part.distribution.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn heuristic_is_non_negative(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let h = heuristic(a, b);
        prop_assert!(h >= 0.0 && h.is_finite());
        prop_assert_eq!(heuristic(a, a), 0.0);
    }

    #[test]
    fn generated_grids_are_valid_and_solvable(seed in any::<u64>(), which in 0usize..8, size in 6i32..14) {
        let task = generate_env(&common::doorkey_tasks()[which], size, size, seed).unwrap();
        prop_assert!(common::grid_violations(&task).is_empty(), "{:?}", common::grid_violations(&task));
        prop_assert!(bfs_plan(&task).is_some());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn search_returns_distinct_configurations(seed in any::<u64>(), n in 1usize..30) {
        let spec = parse_spec(fixtures::BIPEDAL_WALKER).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = spec.base_competencies().map(|c| {
            let raw: Vec<f64> = (0..c.domain_size).map(|_| rng.gen_range(0.05..1.0)).collect();
            let t: f64 = raw.iter().sum();
            (c.name.clone(), raw.iter().map(|x| x / t).collect())
        }).collect();
        let prev = assemble_sebn(&spec, None).unwrap();
        let next = assemble_sebn(&spec.with_phi(&phi).unwrap(), None).unwrap();
        let cfg = SearchConfig { n, expansions: 30, ..Default::default() };
        let found = select_candidates(&prev, &next, "goalreached", &cfg, SearchMode::Max, seed).unwrap();
        prop_assert!(found.candidates.len() <= n);
        let mut envs = found.envs();
        let before = envs.len();
        envs.sort();
        envs.dedup();
        prop_assert_eq!(envs.len(), before);
    }
}

#[test]
fn em_trace_never_decreases() {
    let spec = parse_spec(fixtures::DOORKEY).unwrap();
    let net = assemble_sebn(&spec, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tasks = common::doorkey_tasks();
    let data: Vec<RolloutRecord> = (0..300)
        .map(|i| {
            let t = tasks[i % tasks.len()].clone();
            let o = sample_outcomes(&net, &t, &mut rng).unwrap();
            RolloutRecord::new(0, t, o)
        })
        .collect();
    for seed in 0..4 {
        let est = estimate_phi(&spec, &data, &EmConfig { seed, ..Default::default() }).unwrap();
        for w in est.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", est.trace);
        }
    }
}

#[test]
fn learner_checkpoint_round_trips_after_training() {
    let factory = GridFactory::new(8, 8);
    let mut learner = QLearner::doorkey(QConfig { seed: 2, ..Default::default() });
    let tasks = common::doorkey_tasks();
    for i in 0..40 {
        let mut env = factory.make(&tasks[i % 8], i as u64).unwrap();
        learner.run_episode(&mut env).unwrap();
    }
    let back = QLearner::from_json(&learner.to_json()).unwrap();
    assert_eq!(back, learner);
    let mut a = learner.clone();
    let mut b = back;
    let mut e1 = factory.make(&tasks[7], 99).unwrap();
    let mut e2 = e1.clone();
    assert_eq!(a.evaluate_episode(&mut e1).unwrap(), b.evaluate_episode(&mut e2).unwrap());
}

#[test]
fn easy_biased_start_prefers_easy_tasks() {
    let d = TaskDistribution::init(common::doorkey_tasks(), InitMode::EasyBiased).unwrap();
    for (t, w) in d.support.iter().zip(&d.weights) {
        for (u, v) in d.support.iter().zip(&d.weights) {
            if t.difficulty() < u.difficulty() {
                assert!(w > v);
            }
        }
    }
}
