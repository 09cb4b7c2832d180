use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{sum_product, Evidence, FactorTable, InferenceError, Layer, Network, VarId};

use super::{Kind, Phi, SebnSpec, SpecError};

/// Per-target success flags for one rollout.
pub type Outcomes = BTreeMap<String, bool>;

/// A task class: a full environment assignment plus the enabled targets.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub env: BTreeMap<String, usize>,
    pub enabled_targets: BTreeSet<String>,
}

impl TaskDescriptor {
    pub fn new<'a>(
        env: impl IntoIterator<Item = (&'a str, usize)>,
        targets: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        Self {
            env: env.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            enabled_targets: targets.into_iter().map(str::to_string).collect(),
        }
    }

    /// Sum of the environment feature values.
    pub fn difficulty(&self) -> usize {
        self.env.values().sum()
    }

    pub fn is_enabled(&self, target: &str) -> bool {
        self.enabled_targets.contains(target)
    }

    pub fn validate(&self, spec: &SebnSpec) -> Result<(), SpecError> {
        if self.enabled_targets.is_empty() {
            return Err(SpecError::InvalidArgument("task enables no targets".into()));
        }
        for v in &spec.env_vars {
            match self.env.get(&v.name) {
                None => return Err(SpecError::InvalidArgument(format!("task leaves `{}` unassigned", v.name))),
                Some(&x) if x >= v.domain_size => {
                    return Err(SpecError::InvalidArgument(format!(
                        "task sets `{}={x}` outside domain of size {}",
                        v.name, v.domain_size
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = self.env.keys().find(|k| spec.kind_of(k) != Some(Kind::Env)) {
            return Err(SpecError::InvalidArgument(format!("`{extra}` is not an environment feature")));
        }
        if let Some(bad) = self.enabled_targets.iter().find(|t| spec.kind_of(t) != Some(Kind::Target)) {
            return Err(SpecError::InvalidArgument(format!("`{bad}` is not a target")));
        }
        Ok(())
    }

    /// Environment assignment as evidence on `network`.
    pub fn env_evidence(&self, network: &Network) -> Result<Evidence, SpecError> {
        let mut ev = Evidence::new();
        for (name, &value) in &self.env {
            let id = network.require_id(name)?;
            if network.variable(id).layer != Layer::Environment {
                return Err(SpecError::InvalidArgument(format!("`{name}` is not an environment feature")));
            }
            ev.insert(id, value);
        }
        network.validate_evidence(&ev)?;
        for (id, v) in network.variables().iter().enumerate() {
            if v.layer == Layer::Environment && !ev.contains(id) {
                return Err(SpecError::InvalidArgument(format!("task leaves `{}` unassigned", v.name)));
            }
        }
        Ok(ev)
    }
}

impl fmt::Display for TaskDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let env: Vec<String> = self.env.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let targets: Vec<&str> = self.enabled_targets.iter().map(|s| s.as_str()).collect();
        write!(f, "{} | {}", env.join(" "), targets.join(" "))
    }
}

/// `P(target = 1 | E = task.env)` with competencies marginalised under the
/// network's current parameters.
pub fn predict_success(network: &Network, task: &TaskDescriptor, target: &str) -> Result<f64, SpecError> {
    if !task.is_enabled(target) {
        return Err(SpecError::InvalidArgument(format!("target `{target}` is not enabled for this task")));
    }
    let id = network.require_id(target)?;
    if network.variable(id).layer != Layer::Target {
        return Err(SpecError::InvalidArgument(format!("`{target}` is not a target")));
    }
    let evidence = task.env_evidence(network)?;
    let m = network.query_marginal(&evidence, &[id])?;
    Ok(m.values()[1])
}

/// Draws one rollout's outcomes for the enabled targets of `task` by
/// ancestral sampling with the environment fixed.
pub fn sample_outcomes<R: Rng + ?Sized>(network: &Network, task: &TaskDescriptor, rng: &mut R) -> Result<Outcomes, SpecError> {
    let evidence = task.env_evidence(network)?;
    let values = network.forward_sample(&evidence, rng)?;
    task.enabled_targets
        .iter()
        .map(|t| {
            let id = network.require_id(t)?;
            Ok((t.clone(), values[id] == 1))
        })
        .collect()
}

fn layer_ids(network: &Network, layer: Layer) -> Vec<VarId> {
    (0..network.len()).filter(|&v| network.variable(v).layer == layer).collect()
}

/// Likelihood of one rollout's target outcomes as a function of the
/// competencies it touches, with unobserved targets summed out.
fn observation_likelihood(network: &Network, task: &TaskDescriptor, outcomes: &Outcomes) -> Result<FactorTable, SpecError> {
    let mut evidence = task.env_evidence(network)?;
    for (name, &ok) in outcomes {
        if !task.is_enabled(name) {
            return Err(SpecError::InvalidArgument(format!("outcome for disabled target `{name}`")));
        }
        let id = network.require_id(name)?;
        if network.variable(id).layer != Layer::Target {
            return Err(SpecError::InvalidArgument(format!("`{name}` is not a target")));
        }
        evidence.insert(id, ok as usize);
    }
    let factors: Vec<FactorTable> = layer_ids(network, Layer::Target)
        .into_iter()
        .map(|t| network.cpt(t).restrict(evidence.as_map()))
        .collect();
    let competencies: BTreeSet<VarId> = factors
        .iter()
        .flat_map(|f| f.scope().iter().copied())
        .filter(|&v| network.variable(v).layer == Layer::Competency)
        .collect();
    let keep: Vec<(VarId, usize)> = competencies.iter().map(|&v| (v, network.variable(v).domain_size)).collect();
    let (table, _) = sum_product(factors, &keep).map_err(SpecError::from)?;
    if table.total() == 0.0 {
        return Err(InferenceError::ZeroProbabilityEvidence.into());
    }
    Ok(table)
}

/// Posterior over every competency given a batch of rollouts by the same
/// agent: competencies are shared while environment and targets are
/// replicated per rollout.
pub fn competency_posterior(
    network: &Network,
    observations: &[(TaskDescriptor, Outcomes)],
) -> Result<Phi, SpecError> {
    if observations.is_empty() {
        return Err(SpecError::InvalidArgument("no observations".into()));
    }
    // Likelihoods with equal scope are folded together and renormalised so
    // long batches do not underflow.
    let mut grouped: BTreeMap<Vec<VarId>, FactorTable> = BTreeMap::new();
    for (task, outcomes) in observations {
        let mut lik = observation_likelihood(network, task, outcomes)?;
        lik.normalize();
        let key = lik.scope().to_vec();
        let merged = match grouped.remove(&key) {
            Some(acc) => acc.product(&lik),
            None => lik,
        };
        let mut merged = merged;
        if merged.normalize() == 0.0 {
            return Err(InferenceError::ZeroProbabilityEvidence.into());
        }
        grouped.insert(key, merged);
    }
    let competencies = layer_ids(network, Layer::Competency);
    let mut factors: Vec<FactorTable> = competencies.iter().map(|&c| network.cpt(c).clone()).collect();
    factors.extend(grouped.into_values());
    let mut posterior = Phi::new();
    for &c in &competencies {
        let card = network.variable(c).domain_size;
        let (mut table, _) = sum_product(factors.clone(), &[(c, card)]).map_err(SpecError::from)?;
        if table.normalize() == 0.0 {
            return Err(InferenceError::ZeroProbabilityEvidence.into());
        }
        posterior.insert(network.variable(c).name.clone(), table.values().to_vec());
    }
    Ok(posterior)
}
