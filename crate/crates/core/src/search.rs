//! Candidate environment selection over large design spaces.
//!
//! Environment features are assigned one at a time in a fixed order, giving
//! an OR tree whose leaves are complete configurations. Nodes are scored by
//! how much the predicted success of a target moved between two networks,
//! weighted by the new prediction:
//!
//! ```text
//! h(x) = |ln p_prev(x) - ln p_next(x)| * p_next(x)
//! ```
//!
//! and expanded best first. Frontier nodes left when the budget runs out
//! are completed by sampling the remaining features from the environment
//! prior.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{Evidence, InferenceError, Layer, Network, VarId};
use crate::sebn::SpecError;

/// Probabilities are floored here before taking logarithms.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Prefer the largest heuristic values.
    Max,
    /// Prefer the smallest heuristic values.
    Min,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Internal nodes the best-first loop may expand.
    pub expansions: usize,
    /// Candidates to return.
    pub n: usize,
    pub ibound: usize,
    /// Spaces up to this size are ranked exhaustively.
    pub exhaustive_threshold: usize,
    /// Feature order of the tree; declaration order when empty.
    pub ordering: Vec<String>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { expansions: 200, n: 20, ibound: 20, exhaustive_threshold: 10_000, ordering: Vec::new() }
    }
}

/// Predictions and heuristic value of one (partial) configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub heuristic: f64,
    pub p_prev: f64,
    pub p_next: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub env: BTreeMap<String, usize>,
    pub heuristic: f64,
    pub p_prev: f64,
    pub p_next: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    /// Internal nodes expanded.
    pub expanded: usize,
    /// Complete leaves popped from the queue.
    pub finished: usize,
    /// Nodes still queued when the search stopped.
    pub frontier: usize,
    /// Children pushed over the whole search.
    pub generated: usize,
}

impl CandidateSet {
    pub fn envs(&self) -> Vec<&BTreeMap<String, usize>> {
        self.candidates.iter().map(|c| &c.env).collect()
    }
}

/// `h = |ln p_prev - ln p_next| * p_next` with both probabilities floored.
pub fn heuristic(p_prev: f64, p_next: f64) -> f64 {
    let a = p_prev.max(PROBABILITY_FLOOR);
    let b = p_next.max(PROBABILITY_FLOOR);
    (a.ln() - b.ln()).abs() * b
}

fn target_prob(network: &Network, evidence: &Evidence, target: VarId, ibound: usize) -> Result<f64, InferenceError> {
    Ok(network.wmb_query(evidence, &[target], ibound)?.values()[1])
}

fn env_evidence(network: &Network, partial: &BTreeMap<String, usize>) -> Result<Evidence, SpecError> {
    let mut ev = Evidence::new();
    for (name, &value) in partial {
        let id = network.require_id(name)?;
        if network.variable(id).layer != Layer::Environment {
            return Err(SpecError::InvalidArgument(format!("`{name}` is not an environment feature")));
        }
        ev.insert(id, value);
    }
    network.validate_evidence(&ev)?;
    Ok(ev)
}

fn check_pair(prev: &Network, next: &Network) -> Result<(), SpecError> {
    if prev.same_structure(next) {
        Ok(())
    } else {
        Err(SpecError::InvalidArgument("networks differ in structure".into()))
    }
}

fn target_id(network: &Network, target: &str) -> Result<VarId, SpecError> {
    let id = network.require_id(target)?;
    if network.variable(id).layer != Layer::Target {
        return Err(SpecError::InvalidArgument(format!("`{target}` is not a target")));
    }
    Ok(id)
}

/// Heuristic of a partial environment assignment. Inference is exact
/// whenever no bucket exceeds `ibound`, and weighted mini-bucket otherwise.
pub fn node_heuristic(
    prev: &Network,
    next: &Network,
    partial: &BTreeMap<String, usize>,
    target: &str,
    ibound: usize,
) -> Result<NodeScore, SpecError> {
    check_pair(prev, next)?;
    let t = target_id(next, target)?;
    let ev = env_evidence(next, partial)?;
    score(prev, next, &ev, t, ibound)
}

fn score(prev: &Network, next: &Network, ev: &Evidence, t: VarId, ibound: usize) -> Result<NodeScore, SpecError> {
    let p_prev = target_prob(prev, ev, t, ibound)?;
    let p_next = target_prob(next, ev, t, ibound)?;
    Ok(NodeScore { heuristic: heuristic(p_prev, p_next), p_prev, p_next })
}

fn resolve_ordering(network: &Network, ordering: &[String]) -> Result<Vec<VarId>, SpecError> {
    let env: Vec<VarId> = (0..network.len()).filter(|&v| network.variable(v).layer == Layer::Environment).collect();
    if ordering.is_empty() {
        return Ok(env);
    }
    let ids = ordering.iter().map(|n| network.require_id(n)).collect::<Result<Vec<_>, _>>()?;
    let as_set: BTreeSet<VarId> = ids.iter().copied().collect();
    if as_set.len() != ids.len() || as_set != env.iter().copied().collect() {
        return Err(SpecError::InvalidArgument("ordering must list every environment feature once".into()));
    }
    Ok(ids)
}

/// Orders by heuristic according to the mode, then by the lexicographically
/// smaller assignment. `Ordering::Less` means "better".
fn rank(mode: SearchMode, ha: f64, a: &[usize], hb: f64, b: &[usize]) -> Ordering {
    let by_value = match mode {
        SearchMode::Max => hb.total_cmp(&ha),
        SearchMode::Min => ha.total_cmp(&hb),
    };
    by_value.then_with(|| a.cmp(b))
}

struct Node {
    values: Vec<usize>,
    score: NodeScore,
    mode: SearchMode,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap pops the greatest element, so the better node compares greater.
    fn cmp(&self, other: &Self) -> Ordering {
        rank(self.mode, self.score.heuristic, &self.values, other.score.heuristic, &other.values).reverse()
    }
}

fn to_named(network: &Network, order: &[VarId], values: &[usize]) -> BTreeMap<String, usize> {
    order.iter().zip(values).map(|(&v, &x)| (network.variable(v).name.clone(), x)).collect()
}

/// Best-first OR-tree search for up to `config.n` candidate environments.
///
/// Popping a complete configuration does not use up the expansion budget.
/// Partial leaves are completed by sampling unassigned features from the
/// environment prior of `next`; a completion that duplicates an earlier
/// candidate is redrawn up to ten times and then dropped.
pub fn select_candidates(
    prev: &Network,
    next: &Network,
    target: &str,
    config: &SearchConfig,
    mode: SearchMode,
    seed: u64,
) -> Result<CandidateSet, SpecError> {
    if config.expansions == 0 || config.n == 0 {
        return Err(SpecError::InvalidArgument("expansions and n must be at least 1".into()));
    }
    check_pair(prev, next)?;
    let t = target_id(next, target)?;
    let order = resolve_ordering(next, &config.ordering)?;
    let depth = order.len();
    let evidence_of = |values: &[usize]| -> Evidence { order.iter().copied().zip(values.iter().copied()).collect() };

    let mut heap = BinaryHeap::new();
    let root = score(prev, next, &Evidence::new(), t, config.ibound)?;
    heap.push(Node { values: Vec::new(), score: root, mode });
    let mut out = CandidateSet::default();
    let mut leaves = Vec::new();
    while out.expanded < config.expansions {
        let Some(node) = heap.pop() else { break };
        if node.values.len() == depth {
            out.finished += 1;
            leaves.push(node);
            continue;
        }
        out.expanded += 1;
        let var = order[node.values.len()];
        for value in 0..next.variable(var).domain_size {
            let mut values = node.values.clone();
            values.push(value);
            let s = score(prev, next, &evidence_of(&values), t, config.ibound)?;
            heap.push(Node { values, score: s, mode });
            out.generated += 1;
        }
    }
    out.frontier = heap.len();
    leaves.extend(heap.into_vec());
    if leaves.is_empty() {
        return Err(SpecError::InvalidArgument("search produced no leaves".into()));
    }
    leaves.sort_by(|a, b| rank(mode, a.score.heuristic, &a.values, b.score.heuristic, &b.values));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samplers: Vec<WeightedIndex<f64>> = order
        .iter()
        .map(|&v| WeightedIndex::new(next.cpt(v).values()).map_err(|e| SpecError::InvalidArgument(format!("environment prior: {e}"))))
        .collect::<Result<_, _>>()?;
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    for leaf in leaves {
        if out.candidates.len() == config.n {
            break;
        }
        let mut attempt = 0;
        let full = loop {
            let mut values = leaf.values.clone();
            for s in &samplers[values.len()..] {
                values.push(s.sample(&mut rng));
            }
            if !seen.contains(&values) || leaf.values.len() == depth || attempt == 10 {
                break values;
            }
            attempt += 1;
        };
        if !seen.insert(full.clone()) {
            continue;
        }
        let s = score(prev, next, &evidence_of(&full), t, config.ibound)?;
        out.candidates.push(Candidate {
            env: to_named(next, &order, &full),
            heuristic: s.heuristic,
            p_prev: s.p_prev,
            p_next: s.p_next,
        });
    }
    Ok(out)
}

/// Every complete configuration of the environment features, in
/// lexicographic order over `ordering` (declaration order when empty).
pub fn enumerate_env_space(network: &Network, ordering: &[String]) -> Result<Vec<BTreeMap<String, usize>>, SpecError> {
    let order = resolve_ordering(network, ordering)?;
    let cards: Vec<usize> = order.iter().map(|&v| network.variable(v).domain_size).collect();
    Ok(crate::bayes::AssignmentIter::new(cards).map(|values| to_named(network, &order, &values)).collect())
}

/// `P(t = 1 | env)` for every full configuration over `order` from a single
/// joint query, or `None` when that query would need a bucket wider than
/// `ibound`. Configurations of probability zero map to `None`.
fn conditional_table(network: &Network, order: &[VarId], t: VarId, ibound: usize) -> Result<Option<Vec<Option<f64>>>, SpecError> {
    let mut keep = order.to_vec();
    keep.push(t);
    let empty = Evidence::new();
    if network.query_bucket_width(&empty, &keep) > ibound {
        return Ok(None);
    }
    let joint = network.query_marginal(&empty, &keep)?;
    Ok(Some(
        joint
            .values()
            .chunks(2)
            .map(|row| {
                let total = row[0] + row[1];
                (total > 0.0).then(|| row[1] / total)
            })
            .collect(),
    ))
}

/// Scores every configuration in `env_space` and returns the best `n`
/// (worst `n` in min mode), ties broken lexicographically over `ordering`.
pub fn exhaustive_rank(
    prev: &Network,
    next: &Network,
    env_space: &[BTreeMap<String, usize>],
    target: &str,
    config: &SearchConfig,
    mode: SearchMode,
) -> Result<CandidateSet, SpecError> {
    if env_space.len() > config.exhaustive_threshold {
        return Err(SpecError::InvalidArgument(format!(
            "{} configurations exceed the exhaustive threshold of {}; use select_candidates",
            env_space.len(),
            config.exhaustive_threshold
        )));
    }
    check_pair(prev, next)?;
    let t = target_id(next, target)?;
    let order = resolve_ordering(next, &config.ordering)?;
    let batch = match (conditional_table(prev, &order, t, config.ibound)?, conditional_table(next, &order, t, config.ibound)?) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let cards: Vec<usize> = order.iter().map(|&v| next.variable(v).domain_size).collect();
    let mut scored = Vec::with_capacity(env_space.len());
    for env in env_space {
        let values: Vec<usize> = order
            .iter()
            .map(|&v| {
                env.get(&next.variable(v).name).copied().ok_or_else(|| {
                    SpecError::InvalidArgument(format!("configuration leaves `{}` unassigned", next.variable(v).name))
                })
            })
            .collect::<Result<_, _>>()?;
        let ev = env_evidence(next, env)?;
        let index = values.iter().zip(&cards).fold(0, |acc, (&x, &c)| acc * c + x);
        let s = match &batch {
            Some((a, b)) if a[index].is_some() && b[index].is_some() => {
                let (p_prev, p_next) = (a[index].unwrap(), b[index].unwrap());
                NodeScore { heuristic: heuristic(p_prev, p_next), p_prev, p_next }
            }
            _ => score(prev, next, &ev, t, config.ibound)?,
        };
        scored.push((values, env, s));
    }
    scored.sort_by(|a, b| rank(mode, a.2.heuristic, &a.0, b.2.heuristic, &b.0));
    scored.dedup_by(|a, b| a.0 == b.0);
    Ok(CandidateSet {
        candidates: scored
            .into_iter()
            .take(config.n)
            .map(|(_, env, s)| Candidate { env: env.clone(), heuristic: s.heuristic, p_prev: s.p_prev, p_next: s.p_next })
            .collect(),
        ..Default::default()
    })
}
