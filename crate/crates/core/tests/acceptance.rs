//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines are
//! always printed. The process fails when a criterion outside
//! `KNOWN_SHORTFALLS` fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sebn::bayes::{Evidence, Layer, Network};
use sebn::curriculum::{terminal_target, CurriculumConfig, CurriculumState, TargetRule, Variant};
use sebn::estimator::{estimate_phi, EmConfig, RolloutRecord};
use sebn::harness::{run_experiment, seed_dir, ExperimentConfig, SeedReport};
use sebn::learner::{GridFactory, QConfig, QLearner};
use sebn::megagrid::{bfs_plan, generate_env, observe_state, Direction, Item, Layout, SensorConfig};
use sebn::search::{enumerate_env_space, exhaustive_rank, select_candidates, SearchConfig, SearchMode};
use sebn::sebn::{assemble_sebn, fixtures, parse_spec, predict_success, sample_outcomes, synthesize_cpt, Phi, SebnSpec};

/// Criteria this implementation does not meet. They still run and report
/// FAIL; the README explains the measured gap.
const KNOWN_SHORTFALLS: &[usize] = &[8];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn random_phi(spec: &SebnSpec, rng: &mut ChaCha8Rng) -> Phi {
    spec.base_competencies()
        .map(|c| {
            let raw: Vec<f64> = (0..c.domain_size).map(|_| rng.gen_range(0.05..1.0f64).powi(2)).collect();
            let t: f64 = raw.iter().sum();
            (c.name.clone(), raw.iter().map(|x| x / t).collect())
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Max error of every single-variable marginal under several evidence sets.
fn max_marginal_error(net: &Network, rng: &mut ChaCha8Rng, evidence_sets: usize) -> f64 {
    let joint = common::joint(net);
    let mut worst: f64 = 0.0;
    for _ in 0..evidence_sets {
        let mut ev = Evidence::new();
        let (a, _) = &joint[rng.gen_range(0..joint.len())];
        for (v, &value) in a.iter().enumerate() {
            if rng.gen_bool(0.3) {
                ev.insert(v, value);
            }
        }
        for q in 0..net.len() {
            let exact = net.query_marginal(&ev, &[q]).unwrap();
            let brute = common::brute_marginal(&joint, net.variable(q).domain_size, q, &ev);
            for (x, y) in exact.values().iter().zip(&brute) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

fn c1_inference_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dk = assemble_sebn(&parse_spec(fixtures::DOORKEY).unwrap(), None).unwrap();
    let mut worst = max_marginal_error(&dk, &mut rng, 10);
    for i in 0..50 {
        let n = 2 + i % 13;
        let net = common::random_network_with(&mut rng, n, if n > 10 { 2 } else { 3 });
        worst = worst.max(max_marginal_error(&net, &mut rng, 3));
    }
    let t = start.elapsed();
    verdict(worst <= 1e-9 && t < Duration::from_secs(5), format!("max error {worst:.2e}, {t:.2?}"))
}

fn c2_cpt_golden() -> Verdict {
    let mut checked = 0;
    let mut ok = true;
    for lambda in [0.01, 0.05, 0.2] {
        let spec = parse_spec(&format!(
            "env distance 2\ncompetency move 3\ncompetency pick_up 2\ntarget haskey\nlambda {lambda}\n\
             haskey : (distance=0 | move=1, pick up=1)\nhaskey : (distance=1 | move=2, pick up=1)\n"
        ))
        .unwrap();
        let cpt = synthesize_cpt(&spec, "haskey").unwrap();
        // (distance, move, pick_up) -> P(haskey = 1)
        let listed: [(usize, &[usize], &[usize], f64); 9] = [
            (0, &[0], &[0], lambda),
            (0, &[0], &[1], lambda),
            (0, &[1], &[0], lambda),
            (0, &[1, 2], &[1], 1.0 - lambda),
            (1, &[0], &[0], lambda),
            (1, &[0], &[1], lambda),
            (1, &[1], &[0], lambda),
            (1, &[1], &[1], lambda),
            (1, &[2], &[1], 1.0 - lambda),
        ];
        for (d, moves, picks, p) in listed {
            let complement = if p == lambda { 1.0 - lambda } else { lambda };
            for &m in moves {
                for &k in picks {
                    ok &= cpt.get(&[d, m, k, 1]) == p && cpt.get(&[d, m, k, 0]) == complement;
                }
            }
            checked += 1;
        }
    }
    verdict(ok, format!("{checked} listed entries over 3 failure rates"))
}

fn c3_wmb_exact() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for text in [fixtures::DOORKEY, fixtures::BIPEDAL_WALKER, fixtures::ROBOSUITE] {
        let spec = parse_spec(text).unwrap();
        let net = assemble_sebn(&spec.with_phi(&random_phi(&spec, &mut rng)).unwrap(), None).unwrap();
        for round in 0..4 {
            let mut ev = Evidence::new();
            for v in 0..net.len() {
                let layer = net.variable(v).layer;
                if round > 0 && (layer == Layer::Environment || (round == 3 && layer == Layer::Target)) && rng.gen_bool(0.6) {
                    ev.insert(v, rng.gen_range(0..net.variable(v).domain_size));
                }
            }
            for q in 0..net.len() {
                let (Ok(exact), Ok(approx)) = (net.query_marginal(&ev, &[q]), net.wmb_query(&ev, &[q], 20)) else {
                    continue;
                };
                for (x, y) in exact.values().iter().zip(approx.values()) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    verdict(worst <= 1e-9, format!("max error {worst:.2e} on DoorKey, BipedalWalker, robosuite"))
}

fn c4_mle_recovery() -> Verdict {
    let start = Instant::now();
    let spec = parse_spec(fixtures::DOORKEY).unwrap();
    assert_eq!(spec.lambda, 0.05);
    let truth: Phi = [
        ("move", vec![0.15, 0.25, 0.6]),
        ("pick_up", vec![0.3, 0.7]),
        ("avoid_wall", vec![0.45, 0.55]),
        ("drop", vec![0.5, 0.5]),
        ("open_door", vec![0.2, 0.8]),
    ]
    .map(|(k, v)| (k.to_string(), v))
    .into();
    let net = assemble_sebn(&spec.with_phi(&truth).unwrap(), None).unwrap();
    let tasks = common::doorkey_tasks();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<RolloutRecord> = (0..5000)
        .map(|_| {
            let t = tasks[rng.gen_range(0..tasks.len())].clone();
            let o = sample_outcomes(&net, &t, &mut rng).unwrap();
            RolloutRecord::new(0, t, o)
        })
        .collect();
    let est = estimate_phi(&spec, &data, &EmConfig::default()).unwrap();
    let monotone = est.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, p) in &truth {
        if est.unidentified.contains(name) {
            continue;
        }
        let d = common::tv(p, &est.phi[name]);
        worst = worst.max(d);
        parts.push(format!("{name} {d:.3}"));
    }
    let t = start.elapsed();
    verdict(
        worst <= 0.05 && monotone && t < Duration::from_secs(60),
        format!("TV {} (unidentified {:?}), monotone {monotone}, {t:.2?}", parts.join(", "), est.unidentified),
    )
}

fn c5_update_arithmetic() -> Verdict {
    let spec = parse_spec(fixtures::DOORKEY).unwrap();
    let hard = TargetRule::doorkey().task(
        [("distance", 0), ("wall", 1), ("exists_door", 1)].map(|(k, v)| (k.to_string(), v)).into(),
    );
    let cfg = CurriculumConfig { seed: 5, ..Default::default() };
    let mut state = CurriculumState::new(spec.clone(), TargetRule::doorkey(), hard, cfg).unwrap();
    let mut learner = QLearner::doorkey(QConfig { seed: 5, ..Default::default() });
    let factory = GridFactory::new(8, 8);
    for _ in 0..12 {
        state.run_generation(&mut learner, &factory).unwrap();
    }
    let mut worst: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut prev_phi = spec.phi_base.clone();
    for g in &state.history {
        let prev_net = assemble_sebn(&spec.with_phi(&prev_phi).unwrap(), None).unwrap();
        let next_net = assemble_sebn(&spec.with_phi(&g.estimate.phi).unwrap(), None).unwrap();
        let mut fitness = Vec::new();
        for t in &g.tasks {
            let terminal = terminal_target(&spec, &t.task.enabled_targets).unwrap();
            let a = predict_success(&prev_net, &t.task, &terminal).unwrap();
            let b = predict_success(&next_net, &t.task, &terminal).unwrap();
            worst = worst.max((a - t.pred_prev.unwrap()).abs()).max((b - t.pred_curr.unwrap()).abs());
            fitness.push((b - a) * (b - a));
        }
        let total: f64 = fitness.iter().sum();
        for (t, f) in g.tasks.iter().zip(&fitness) {
            let w = 0.5 * f / total + 0.5 * t.previous_weight;
            worst = worst.max((w - t.weight).abs());
        }
        worst_sum = worst_sum.max((g.tasks.iter().map(|t| t.weight).sum::<f64>() - 1.0).abs());
        prev_phi = g.estimate.phi.clone();
    }
    verdict(
        worst <= 1e-12 && worst_sum <= 1e-9,
        format!("{} generations, max deviation {worst:.2e}, max |sum - 1| {worst_sum:.2e}", state.history.len()),
    )
}

fn overlap(a: &[&std::collections::BTreeMap<String, usize>], b: &[&std::collections::BTreeMap<String, usize>]) -> f64 {
    let sa: BTreeSet<_> = a.iter().collect();
    b.iter().filter(|e| sa.contains(e)).count() as f64 / a.len().max(1) as f64
}

fn c6_search_fidelity() -> Verdict {
    let spec = parse_spec(fixtures::BIPEDAL_WALKER).unwrap();
    let prev = assemble_sebn(&spec, None).unwrap();
    let search = SearchConfig { n: 20, expansions: 300, ..Default::default() };
    let mut overlaps = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let next = assemble_sebn(&spec.with_phi(&random_phi(&spec, &mut rng)).unwrap(), None).unwrap();
        let space = enumerate_env_space(&next, &[]).unwrap();
        assert_eq!(space.len(), 1536);
        let exact = exhaustive_rank(&prev, &next, &space, "goalreached", &search, SearchMode::Max).unwrap();
        let found = select_candidates(&prev, &next, "goalreached", &search, SearchMode::Max, seed).unwrap();
        overlaps.push(overlap(&exact.envs(), &found.envs()));
    }
    let bw = median(overlaps.clone());

    let dk_spec = parse_spec(fixtures::DOORKEY).unwrap();
    let dk_prev = assemble_sebn(&dk_spec, None).unwrap();
    let mut dk_min: f64 = 1.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let next = assemble_sebn(&dk_spec.with_phi(&random_phi(&dk_spec, &mut rng)).unwrap(), None).unwrap();
        let space = enumerate_env_space(&next, &[]).unwrap();
        let exact = exhaustive_rank(&dk_prev, &next, &space, "goalreached", &search, SearchMode::Max).unwrap();
        let found = select_candidates(&dk_prev, &next, "goalreached", &search, SearchMode::Max, seed).unwrap();
        dk_min = dk_min.min(overlap(&exact.envs(), &found.envs()));
    }
    verdict(
        bw >= 0.5 && dk_min == 1.0,
        format!("BipedalWalker median overlap {bw:.2} (min {:.2}), DoorKey min overlap {dk_min:.2}", overlaps.iter().copied().fold(1.0, f64::min)),
    )
}

fn c7_megagrid() -> Verdict {
    let layout = Layout { width: 10, height: 10, goal: (4, 8), walls: BTreeSet::new(), door: None };
    let state = sebn::megagrid::AgentState {
        agent: (4, 4),
        facing: Direction::Up,
        key: Some((4, 3)),
        carrying: false,
        door_open: false,
    };
    let o = observe_state(&layout, &state, &SensorConfig::default());
    let readings = o.get(Item::Key, Direction::Up) == 0.875 && o.get(Item::Goal, Direction::Down) == 0.5;
    let mut failures = Vec::new();
    for task in common::doorkey_tasks() {
        for seed in 0..1000 {
            let g = generate_env(&task, 8, 8, seed).unwrap();
            let v = common::grid_violations(&g);
            if !v.is_empty() || bfs_plan(&g).is_none() {
                failures.push(format!("{task} seed {seed}: {v:?}"));
            }
        }
    }
    verdict(
        readings && failures.is_empty(),
        match failures.first() {
            None => format!("readings exact: {readings}; 8000 tasks, 0 invalid"),
            Some(f) => format!("readings exact: {readings}; 8000 tasks, {} invalid, first {f:?}", failures.len()),
        },
    )
}

fn curriculum_experiment() -> (ExperimentConfig, sebn::harness::EvalReport, Duration, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        variants: vec![Variant::Sebn, Variant::None],
        seeds: (0..5).collect(),
        generations: 150,
        eval_interval: 5,
        eval_episodes: 50,
        grid_size: 8,
        generalization_size: Some(32),
        output_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let start = Instant::now();
    let report = run_experiment(&config).unwrap();
    (config, report, start.elapsed(), dir)
}

fn reach(s: &SeedReport, generations: usize) -> usize {
    s.generations_to_threshold.unwrap_or(generations + 1)
}

fn c8_jumpstart(config: &ExperimentConfig, report: &sebn::harness::EvalReport, elapsed: Duration) -> Verdict {
    let sebn = &report.variant(Variant::Sebn).unwrap().seeds;
    let none = &report.variant(Variant::None).unwrap().seeds;
    let g = config.generations;
    let a: Vec<usize> = sebn.iter().map(|s| reach(s, g)).collect();
    let b: Vec<usize> = none.iter().map(|s| reach(s, g)).collect();
    let strictly = a.iter().zip(&b).filter(|(x, y)| x < y).count();
    let med = |v: &[usize]| median(v.iter().map(|&x| x as f64).collect());
    let errors = sebn.iter().chain(none).filter(|s| s.error.is_some()).count();
    verdict(
        errors == 0 && med(&a) <= med(&b) && strictly >= 3 && elapsed < Duration::from_secs(15 * 60),
        format!(
            "generations to 80% (>{g} = never): sebn {a:?} median {}, none {b:?} median {}; sebn strictly faster in {strictly}/5; {elapsed:.0?}",
            med(&a),
            med(&b)
        ),
    )
}

fn c9_generalization(report: &sebn::harness::EvalReport) -> Verdict {
    let rates = |v: Variant| -> Vec<f64> {
        report.variant(v).unwrap().seeds.iter().filter_map(|s| s.generalization).collect()
    };
    let (a, b) = (rates(Variant::Sebn), rates(Variant::None));
    let (ma, mb) = (median(a.clone()), median(b.clone()));
    verdict(
        a.len() == 5 && b.len() == 5 && ma >= mb,
        format!("32x32 success: sebn {a:?} median {ma:.2}, none {b:?} median {mb:.2}"),
    )
}

fn c10_determinism() -> Verdict {
    let mut identical = true;
    let mut files = 0;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let config = ExperimentConfig {
            variants: Variant::ALL.to_vec(),
            seeds: vec![3, 8],
            generations: 6,
            generation_size: 16,
            eval_episodes: 5,
            generalization_size: None,
            output_dir: d.path().to_path_buf(),
            ..Default::default()
        };
        run_experiment(&config).unwrap();
    }
    for v in Variant::ALL {
        for seed in [3, 8] {
            for f in ["history.csv", "rollouts.jsonl", "eval.csv"] {
                let read = |i: usize| std::fs::read(seed_dir(dirs[i].path(), v, seed).join(f)).unwrap();
                identical &= read(0) == read(1);
                files += 1;
            }
        }
    }
    verdict(identical, format!("{files} files compared across two executions"))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |n: usize, name: &'static str, v: Verdict| {
        println!("criterion {n:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    record(1, "inference oracle equivalence", c1_inference_oracle());
    record(2, "CPT golden entries", c2_cpt_golden());
    record(3, "weighted mini-bucket exactness", c3_wmb_exact());
    record(4, "maximum-likelihood recovery", c4_mle_recovery());
    record(5, "curriculum update arithmetic", c5_update_arithmetic());
    record(6, "candidate-search fidelity", c6_search_fidelity());
    record(7, "megagrid sensors and generator", c7_megagrid());
    let (config, report, elapsed, _dir) = curriculum_experiment();
    record(8, "end-to-end jumpstart", c8_jumpstart(&config, &report, elapsed));
    record(9, "generalization ordering", c9_generalization(&report));
    record(10, "determinism", c10_determinism());
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.0?}",
        results.len() - failed.len(),
        results.len(),
        start.elapsed()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?} (known shortfalls: {KNOWN_SHORTFALLS:?})");
    }
    let unexpected: Vec<usize> = failed.iter().copied().filter(|n| !KNOWN_SHORTFALLS.contains(n)).collect();
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
