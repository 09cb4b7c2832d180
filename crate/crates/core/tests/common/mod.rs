//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use sebn::bayes::{DiscreteVariable, Evidence, FactorTable, Layer, Network};
use sebn::megagrid::{GridTask, DISTANCE, EXISTS_DOOR, WALL};

/// Random DAG over `n` variables with cardinality 2 or 3, at most three
/// parents each and Dirichlet-like random rows.
pub fn random_network<R: Rng>(rng: &mut R, n: usize) -> Network {
    random_network_with(rng, n, 3)
}

pub fn random_network_with<R: Rng>(rng: &mut R, n: usize, max_card: usize) -> Network {
    let mut vars = Vec::new();
    let mut cpts = Vec::new();
    for id in 0..n {
        let card = rng.gen_range(2..=max_card);
        vars.push(DiscreteVariable::new(format!("x{id}"), card, Layer::Untagged));
        let mut parents: Vec<usize> = (0..id).filter(|_| rng.gen_bool(0.3)).collect();
        while parents.len() > 3 {
            parents.remove(rng.gen_range(0..parents.len()));
        }
        let mut scope = parents.clone();
        scope.push(id);
        let cards: Vec<usize> = scope.iter().map(|&v| vars[v].domain_size).collect();
        let rows: usize = cards[..cards.len() - 1].iter().product();
        let mut values = Vec::new();
        for _ in 0..rows {
            let raw: Vec<f64> = (0..card).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            values.extend(raw.iter().map(|x| x / total));
        }
        cpts.push(FactorTable::new(scope, cards, values).unwrap());
    }
    Network::new(vars, cpts).unwrap()
}

fn entry(cpt: &FactorTable, full: &[usize]) -> f64 {
    let mut index = 0;
    for (&v, &c) in cpt.scope().iter().zip(cpt.cards()) {
        index = index * c + full[v];
    }
    cpt.values()[index]
}

/// Every complete assignment with its joint probability, by the chain rule.
pub fn joint(network: &Network) -> Vec<(Vec<usize>, f64)> {
    let cards: Vec<usize> = network.variables().iter().map(|v| v.domain_size).collect();
    let mut out = Vec::new();
    let mut a = vec![0; cards.len()];
    loop {
        let p: f64 = network.cpts().iter().map(|f| entry(f, &a)).product();
        out.push((a.clone(), p));
        let mut i = cards.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            a[i] += 1;
            if a[i] < cards[i] {
                break;
            }
            a[i] = 0;
        }
    }
}

/// `P(var | evidence)` by summing the joint table.
pub fn brute_marginal(joint: &[(Vec<usize>, f64)], card: usize, var: usize, evidence: &Evidence) -> Vec<f64> {
    let mut m = vec![0.0; card];
    for (a, p) in joint {
        if evidence.iter().all(|(v, x)| a[v] == x) {
            m[a[var]] += p;
        }
    }
    let total: f64 = m.iter().sum();
    m.iter().map(|x| x / total).collect()
}

/// Violations of the structural rules a generated DoorKey task must obey.
pub fn grid_violations(task: &GridTask) -> Vec<String> {
    let l = &task.layout;
    let s = &task.state;
    let d = &task.descriptor.env;
    let mut bad = Vec::new();
    let mut special = vec![("goal", l.goal), ("agent", s.agent)];
    special.extend(l.door.map(|c| ("door", c)));
    special.extend(s.key.map(|c| ("key", c)));
    for (name, c) in &special {
        if !l.in_bounds(*c) {
            bad.push(format!("{name} out of bounds"));
        }
        if l.walls.contains(c) {
            bad.push(format!("{name} on a wall"));
        }
    }
    for i in 0..special.len() {
        for j in i + 1..special.len() {
            if special[i].1 == special[j].1 {
                bad.push(format!("{} overlaps {}", special[i].0, special[j].0));
            }
        }
    }
    if l.walls.iter().any(|&c| !l.in_bounds(c)) {
        bad.push("wall out of bounds".into());
    }
    if d[EXISTS_DOOR] == 1 && (l.door.is_none() || s.key.is_none() || s.door_open || s.carrying) {
        bad.push("locked door task without a locked door and a key".into());
    }
    if d[EXISTS_DOOR] == 0 && (l.door.is_some() || s.key.is_some()) {
        bad.push("door or key without the feature".into());
    }
    if d[WALL] == 1 {
        let spans = |vertical: bool| {
            let (major, minor) = if vertical { (l.width, l.height) } else { (l.height, l.width) };
            (0..major).any(|line| {
                let at = |m: i32| if vertical { (line, m) } else { (m, line) };
                let blocked = (0..minor).filter(|&m| l.walls.contains(&at(m))).count() as i32;
                let gaps: Vec<i32> = (0..minor).filter(|&m| !l.walls.contains(&at(m))).collect();
                blocked == minor - 1 && gaps.len() == 1 && l.door.is_none_or(|door| door == at(gaps[0]))
            })
        };
        if !spans(true) && !spans(false) {
            bad.push("no wall spanning the grid with a single gap".into());
        }
    }
    let pois: Vec<_> = s.key.into_iter().chain([l.goal]).collect();
    let near = pois.iter().any(|&p| (s.agent.0 - p.0).abs().max((s.agent.1 - p.1).abs()) <= 2);
    if near != (d[DISTANCE] == 0) {
        bad.push(format!("distance feature {} but near = {near}", d[DISTANCE]));
    }
    bad
}

pub fn doorkey_tasks() -> Vec<sebn::sebn::TaskDescriptor> {
    let rule = sebn::curriculum::TargetRule::doorkey();
    let mut out = Vec::new();
    for d in 0..2 {
        for w in 0..2 {
            for l in 0..2 {
                let env: BTreeMap<String, usize> =
                    [(DISTANCE, d), (WALL, w), (EXISTS_DOOR, l)].map(|(k, v)| (k.to_string(), v)).into();
                out.push(rule.task(env));
            }
        }
    }
    out
}

/// Total-variation distance between two distributions.
pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
