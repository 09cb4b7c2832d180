//! Maximum-likelihood estimation of base-competency parameters from rollouts.
//!
//! The objective is `Σ_i ln P(K = κ_i | E = e_i; Φ_B)`. Each distinct
//! (task, outcome) pattern contributes a likelihood table over the base
//! competencies it depends on; those tables do not involve `Φ_B`, so they are
//! built once and EM only touches small factor products afterwards.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{sum_product, FactorTable, InferenceError, Layer, Network, VarId};
use crate::sebn::{assemble_sebn, Outcomes, Phi, SebnSpec, SpecError, TaskDescriptor};

/// One episode: the task that was played and which enabled targets succeeded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutRecord {
    #[serde(default)]
    pub generation: usize,
    pub task: TaskDescriptor,
    pub outcomes: Outcomes,
}

impl RolloutRecord {
    pub fn new(generation: usize, task: TaskDescriptor, outcomes: Outcomes) -> Self {
        Self { generation, task, outcomes }
    }

    pub fn validate(&self, spec: &SebnSpec) -> Result<(), SpecError> {
        self.task.validate(spec)?;
        if let Some(bad) = self.outcomes.keys().find(|k| !self.task.is_enabled(k)) {
            return Err(SpecError::InvalidArgument(format!("outcome for disabled or unknown target `{bad}`")));
        }
        Ok(())
    }

    /// Serialises records as JSON lines.
    pub fn to_jsonl(records: &[RolloutRecord]) -> String {
        let mut out = String::new();
        for r in records {
            out.push_str(&serde_json::to_string(r).expect("record serialises"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<RolloutRecord>, SpecError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| SpecError::InvalidArgument(format!("rollout log line {}: {e}", i + 1)))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iterations: 200, restarts: 4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub phi: Phi,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Base competencies no observed target depends on; they keep the
    /// values of the spec's `phi_base`.
    pub unidentified: Vec<String>,
    /// Rollouts with zero probability under the final estimate.
    pub flagged: usize,
    /// Log-likelihood before each M-step of the returned run.
    pub trace: Vec<f64>,
}

struct Pattern {
    likelihood: FactorTable,
    weight: f64,
}

/// The rollout data reduced to weighted likelihood tables over base
/// competencies.
struct Problem {
    base: Vec<(VarId, String, usize)>,
    patterns: Vec<Pattern>,
}

fn relevant_factors(
    network: &Network,
    derived: &BTreeSet<VarId>,
    record: &RolloutRecord,
) -> Result<Vec<FactorTable>, SpecError> {
    let mut evidence = record.task.env_evidence(network)?;
    let mut stack = Vec::new();
    for (name, &ok) in &record.outcomes {
        let id = network.require_id(name)?;
        if network.variable(id).layer != Layer::Target {
            return Err(SpecError::InvalidArgument(format!("`{name}` is not a target")));
        }
        evidence.insert(id, ok as usize);
        stack.push(id);
    }
    // Observed targets plus the targets and derived competencies they
    // depend on; everything else sums to one.
    let mut seen = BTreeSet::new();
    while let Some(v) = stack.pop() {
        if !seen.insert(v) {
            continue;
        }
        for &p in network.parents(v) {
            if network.variable(p).layer == Layer::Target || derived.contains(&p) {
                stack.push(p);
            }
        }
    }
    Ok(seen.into_iter().map(|v| network.cpt(v).restrict(evidence.as_map())).collect())
}

impl Problem {
    fn new<'a>(spec: &SebnSpec, data: impl IntoIterator<Item = (&'a RolloutRecord, f64)>) -> Result<Self, SpecError> {
        let network = assemble_sebn(spec, None)?;
        let base: Vec<(VarId, String, usize)> = spec
            .base_competencies()
            .map(|c| (network.require_id(&c.name).expect("declared"), c.name.clone(), c.domain_size))
            .collect();
        let is_base: BTreeMap<VarId, usize> = base.iter().map(|(v, _, n)| (*v, *n)).collect();
        let derived: BTreeSet<VarId> = spec
            .competency_vars
            .iter()
            .filter(|c| !c.is_base)
            .map(|c| network.require_id(&c.name).expect("declared"))
            .collect();
        let mut grouped: BTreeMap<(&TaskDescriptor, &Outcomes), (f64, &RolloutRecord)> = BTreeMap::new();
        for (record, weight) in data {
            if !(weight.is_finite() && weight >= 0.0) {
                return Err(SpecError::InvalidArgument(format!("rollout weight {weight} is not a finite non-negative number")));
            }
            record.validate(spec)?;
            grouped.entry((&record.task, &record.outcomes)).or_insert((0.0, record)).0 += weight;
        }
        if grouped.is_empty() {
            return Err(SpecError::InvalidArgument("no rollouts".into()));
        }
        let mut patterns = Vec::with_capacity(grouped.len());
        for (weight, record) in grouped.into_values() {
            let factors = relevant_factors(&network, &derived, record)?;
            let keep: Vec<(VarId, usize)> = factors
                .iter()
                .flat_map(|f| f.scope().iter().copied())
                .filter_map(|v| is_base.get(&v).map(|&n| (v, n)))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let (mut likelihood, log_scale) = sum_product(factors, &keep)?;
            likelihood.scale(log_scale.exp());
            patterns.push(Pattern { likelihood, weight });
        }
        Ok(Self { base, patterns })
    }

    fn prior_factors(&self, phi: &Phi) -> Result<BTreeMap<VarId, FactorTable>, SpecError> {
        self.base
            .iter()
            .map(|(v, name, n)| {
                let p = phi
                    .get(name)
                    .ok_or_else(|| SpecError::InvalidArgument(format!("phi lacks `{name}`")))?;
                Ok((*v, FactorTable::new(vec![*v], vec![*n], p.clone())?))
            })
            .collect()
    }

    fn identified(&self) -> BTreeSet<VarId> {
        self.patterns
            .iter()
            .filter(|p| p.weight > 0.0)
            .flat_map(|p| p.likelihood.scope().iter().copied())
            .collect()
    }

    /// Joint of one pattern's likelihood with the priors of its scope.
    fn joint(pattern: &Pattern, priors: &BTreeMap<VarId, FactorTable>) -> FactorTable {
        let mut joint = pattern.likelihood.clone();
        for v in pattern.likelihood.scope() {
            joint = joint.product(&priors[v]);
        }
        joint
    }

    fn log_likelihood(&self, phi: &Phi) -> Result<f64, SpecError> {
        let priors = self.prior_factors(phi)?;
        let mut total = 0.0;
        for p in self.patterns.iter().filter(|p| p.weight > 0.0) {
            total += p.weight * Self::joint(p, &priors).total().ln();
        }
        Ok(total)
    }

    /// One E-step and M-step. Returns the log-likelihood at `phi`, the
    /// updated parameters and the number of impossible rollouts.
    fn em_step(&self, phi: &Phi) -> Result<(f64, Phi, usize), SpecError> {
        let priors = self.prior_factors(phi)?;
        let mut sums: BTreeMap<VarId, Vec<f64>> = self.base.iter().map(|(v, _, n)| (*v, vec![0.0; *n])).collect();
        let mut mass = 0.0;
        let mut ll = 0.0;
        let mut flagged = 0;
        for p in self.patterns.iter().filter(|p| p.weight > 0.0) {
            let joint = Self::joint(p, &priors);
            let z = joint.total();
            if z <= 0.0 {
                flagged += 1;
                ll = f64::NEG_INFINITY;
                continue;
            }
            ll += p.weight * z.ln();
            mass += p.weight;
            for (v, acc) in sums.iter_mut() {
                let post = if joint.contains(*v) { joint.marginal(&[*v]) } else { priors[v].clone() };
                let norm = if joint.contains(*v) { z } else { 1.0 };
                for (a, x) in acc.iter_mut().zip(post.values()) {
                    *a += p.weight * x / norm;
                }
            }
        }
        if mass == 0.0 {
            return Err(InferenceError::ZeroProbabilityEvidence.into());
        }
        let mut next = phi.clone();
        for (v, name, _) in &self.base {
            let mut column: Vec<f64> = sums[v].iter().map(|s| s / mass).collect();
            let total: f64 = column.iter().sum();
            column.iter_mut().for_each(|x| *x /= total);
            next.insert(name.clone(), column);
        }
        Ok((ll, next, flagged))
    }

    fn run(&self, start: Phi, config: &EmConfig) -> Result<PhiEstimate, SpecError> {
        let mut phi = start;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        while iterations < config.max_iterations {
            let (ll, next, _) = self.em_step(&phi)?;
            if let Some(&prev) = trace.last() {
                if ll - prev < config.tolerance {
                    trace.push(ll);
                    converged = true;
                    break;
                }
            }
            trace.push(ll);
            phi = next;
            iterations += 1;
        }
        let (ll, _, flagged) = self.em_step(&phi)?;
        Ok(PhiEstimate {
            phi,
            log_likelihood: ll,
            iterations,
            converged,
            unidentified: Vec::new(),
            flagged,
            trace,
        })
    }
}

fn dirichlet_one(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// `Σ_i ln P(K = κ_i | E = e_i; phi)`. Negative infinity when some rollout
/// is impossible under `phi`.
pub fn log_likelihood(spec: &SebnSpec, phi: &Phi, data: &[RolloutRecord]) -> Result<f64, SpecError> {
    let problem = Problem::new(spec, data.iter().map(|r| (r, 1.0)))?;
    problem.log_likelihood(phi)
}

/// Posterior over each base competency given a single rollout under `phi`.
pub fn posterior_responsibilities(spec: &SebnSpec, phi: &Phi, record: &RolloutRecord) -> Result<Phi, SpecError> {
    let problem = Problem::new(spec, [(record, 1.0)])?;
    let priors = problem.prior_factors(phi)?;
    let joint = Problem::joint(&problem.patterns[0], &priors);
    let z = joint.total();
    if z <= 0.0 {
        return Err(InferenceError::ZeroProbabilityEvidence.into());
    }
    Ok(problem
        .base
        .iter()
        .map(|(v, name, _)| {
            let post = if joint.contains(*v) {
                joint.marginal(&[*v]).values().iter().map(|x| x / z).collect()
            } else {
                phi[name].clone()
            };
            (name.clone(), post)
        })
        .collect())
}

/// EM estimate of `Φ_B` with every rollout weighted equally.
pub fn estimate_phi(spec: &SebnSpec, data: &[RolloutRecord], config: &EmConfig) -> Result<PhiEstimate, SpecError> {
    estimate_phi_weighted(spec, data.iter().map(|r| (r, 1.0)), config)
}

/// EM estimate of `Φ_B` from weighted rollouts. The best of one uniform run
/// and `config.restarts` seeded Dirichlet starts is returned.
pub fn estimate_phi_weighted<'a>(
    spec: &SebnSpec,
    data: impl IntoIterator<Item = (&'a RolloutRecord, f64)>,
    config: &EmConfig,
) -> Result<PhiEstimate, SpecError> {
    if config.tolerance.is_nan() || config.tolerance <= 0.0 {
        return Err(SpecError::InvalidArgument("tolerance must be positive".into()));
    }
    let problem = Problem::new(spec, data)?;
    let identified = problem.identified();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = vec![spec.uniform_phi()];
    for _ in 0..config.restarts {
        starts.push(problem.base.iter().map(|(_, name, n)| (name.clone(), dirichlet_one(&mut rng, *n))).collect());
    }
    let mut best: Option<PhiEstimate> = None;
    for mut start in starts {
        for (v, name, _) in &problem.base {
            if !identified.contains(v) {
                start.insert(name.clone(), spec.phi_base[name].clone());
            }
        }
        let run = problem.run(start, config)?;
        if best.as_ref().is_none_or(|b| run.log_likelihood > b.log_likelihood) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least the uniform run");
    best.unidentified = problem
        .base
        .iter()
        .filter(|(v, _, _)| !identified.contains(v))
        .map(|(_, name, _)| name.clone())
        .collect();
    if best.flagged > 0 {
        warn!("{} rollout patterns have zero probability under the estimate", best.flagged);
    }
    Ok(best)
}
