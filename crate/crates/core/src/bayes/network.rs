use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::elimination::{eliminate, max_bucket_scope, min_fill_order};
use super::{FactorTable, InferenceError, VarId};

/// Which SEBN layer a variable belongs to, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Environment,
    Competency,
    Target,
    Untagged,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteVariable {
    pub name: String,
    pub domain_size: usize,
    pub layer: Layer,
}

impl DiscreteVariable {
    pub fn new(name: impl Into<String>, domain_size: usize, layer: Layer) -> Self {
        Self { name: name.into(), domain_size, layer }
    }
}

/// Observed values keyed by variable id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Evidence(BTreeMap<VarId, usize>);

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: VarId, value: usize) -> Self {
        self.0.insert(var, value);
        self
    }

    pub fn insert(&mut self, var: VarId, value: usize) {
        self.0.insert(var, value);
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.0.get(&var).copied()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.0.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    pub fn as_map(&self) -> &BTreeMap<VarId, usize> {
        &self.0
    }
}

impl FromIterator<(VarId, usize)> for Evidence {
    fn from_iter<I: IntoIterator<Item = (VarId, usize)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// A discrete Bayesian network: one conditional table per variable, with
/// the variable itself last in the table's scope.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    variables: Vec<DiscreteVariable>,
    cpts: Vec<FactorTable>,
    index: BTreeMap<String, VarId>,
}

const ROW_TOLERANCE: f64 = 1e-12;

impl Network {
    pub fn new(variables: Vec<DiscreteVariable>, cpts: Vec<FactorTable>) -> Result<Self, InferenceError> {
        let mut index = BTreeMap::new();
        for (id, v) in variables.iter().enumerate() {
            if v.domain_size == 0 {
                return Err(InferenceError::InvalidArgument(format!("`{}` has an empty domain", v.name)));
            }
            if index.insert(v.name.clone(), id).is_some() {
                return Err(InferenceError::InvalidArgument(format!("duplicate variable `{}`", v.name)));
            }
        }
        if cpts.len() != variables.len() {
            return Err(InferenceError::InvalidArgument(format!(
                "{} variables but {} conditional tables",
                variables.len(),
                cpts.len()
            )));
        }
        for (id, cpt) in cpts.iter().enumerate() {
            let name = &variables[id].name;
            if cpt.scope().last() != Some(&id) {
                return Err(InferenceError::Malformed(format!("table for `{name}` must end with its child")));
            }
            for (&v, &c) in cpt.scope().iter().zip(cpt.cards()) {
                let decl = variables
                    .get(v)
                    .ok_or_else(|| InferenceError::UnknownVariable(format!("#{v}")))?;
                if decl.domain_size != c {
                    return Err(InferenceError::Malformed(format!(
                        "table for `{name}` gives `{}` cardinality {c}, declared {}",
                        decl.name, decl.domain_size
                    )));
                }
            }
            if let Some(bad) = cpt
                .child_row_sums()
                .into_iter()
                .find(|s| (s - 1.0).abs() > ROW_TOLERANCE)
            {
                return Err(InferenceError::Malformed(format!(
                    "table for `{name}` has a row summing to {bad}"
                )));
            }
        }
        let net = Self { variables, cpts, index };
        net.check_acyclic()?;
        Ok(net)
    }

    fn check_acyclic(&self) -> Result<(), InferenceError> {
        // Kahn's algorithm; anything left over sits on or behind a cycle.
        let n = self.variables.len();
        let mut indegree: Vec<usize> = (0..n).map(|v| self.parents(v).len()).collect();
        let mut children: Vec<Vec<VarId>> = vec![Vec::new(); n];
        for v in 0..n {
            for &p in self.parents(v) {
                children[p].push(v);
            }
        }
        let mut ready: Vec<VarId> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = ready.pop() {
            seen += 1;
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if seen == n {
            return Ok(());
        }
        // Walk parent links inside the residual graph until a node repeats.
        let mut path = vec![(0..n).find(|&v| indegree[v] > 0).unwrap()];
        loop {
            let cur = *path.last().unwrap();
            let next = *self.parents(cur).iter().find(|&&p| indegree[p] > 0).unwrap();
            if let Some(pos) = path.iter().position(|&v| v == next) {
                let mut cycle: Vec<String> =
                    path[pos..].iter().rev().map(|&v| self.variables[v].name.clone()).collect();
                cycle.push(cycle[0].clone());
                return Err(InferenceError::Cycle(cycle));
            }
            path.push(next);
        }
    }

    pub fn variables(&self) -> &[DiscreteVariable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &DiscreteVariable {
        &self.variables[id]
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn cpts(&self) -> &[FactorTable] {
        &self.cpts
    }

    pub fn cpt(&self, id: VarId) -> &FactorTable {
        &self.cpts[id]
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn require_id(&self, name: &str) -> Result<VarId, InferenceError> {
        self.id(name).ok_or_else(|| InferenceError::UnknownVariable(name.to_string()))
    }

    pub fn parents(&self, id: VarId) -> &[VarId] {
        let scope = self.cpts[id].scope();
        &scope[..scope.len() - 1]
    }

    /// Builds evidence from `(name, value)` pairs, validating both.
    pub fn evidence<'a>(&self, pairs: impl IntoIterator<Item = (&'a str, usize)>) -> Result<Evidence, InferenceError> {
        let mut ev = Evidence::new();
        for (name, value) in pairs {
            ev.insert(self.require_id(name)?, value);
        }
        self.validate_evidence(&ev)?;
        Ok(ev)
    }

    pub fn validate_evidence(&self, evidence: &Evidence) -> Result<(), InferenceError> {
        for (v, value) in evidence.iter() {
            let decl = self
                .variables
                .get(v)
                .ok_or_else(|| InferenceError::UnknownVariable(format!("#{v}")))?;
            if value >= decl.domain_size {
                return Err(InferenceError::InvalidArgument(format!(
                    "value {value} outside the domain of `{}` (size {})",
                    decl.name, decl.domain_size
                )));
            }
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[VarId]) -> Result<(), InferenceError> {
        match ids.iter().find(|&&v| v >= self.len()) {
            Some(v) => Err(InferenceError::InvalidArgument(format!("unknown variable id {v}"))),
            None => Ok(()),
        }
    }

    /// Min-fill elimination order over the moralised graph for every
    /// variable outside `keep`.
    pub fn elimination_order(&self, keep: &[VarId]) -> Result<Vec<VarId>, InferenceError> {
        self.check_ids(keep)?;
        let elim: BTreeSet<VarId> = (0..self.len()).filter(|v| !keep.contains(v)).collect();
        Ok(min_fill_order(self.cpts.iter().map(|f| f.scope()), &elim))
    }

    /// Number of fill edges added at each step of `order` on the moral graph.
    pub fn fill_edges(&self, order: &[VarId]) -> Vec<usize> {
        super::elimination::fill_edges_per_step(self.cpts.iter().map(|f| f.scope()), order)
    }

    /// Ancestral closure of `roots`; everything else is barren for the query.
    fn ancestors_of(&self, roots: impl IntoIterator<Item = VarId>) -> BTreeSet<VarId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<VarId> = roots.into_iter().collect();
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(self.parents(v).iter().copied());
            }
        }
        seen
    }

    /// Evidence-reduced factors of the ancestral subnetwork and the order in
    /// which to eliminate everything except `keep`.
    fn reduced_problem(&self, evidence: &Evidence, keep: &[VarId]) -> (Vec<FactorTable>, Vec<VarId>) {
        let relevant = self.ancestors_of(keep.iter().copied().chain(evidence.iter().map(|(v, _)| v)));
        let factors: Vec<FactorTable> = relevant
            .iter()
            .map(|&v| self.cpts[v].restrict(evidence.as_map()))
            .collect();
        let elim: BTreeSet<VarId> = relevant
            .iter()
            .copied()
            .filter(|v| !evidence.contains(*v) && !keep.contains(v))
            .collect();
        let order = min_fill_order(factors.iter().map(|f| f.scope()), &elim);
        (factors, order)
    }

    fn check_query(&self, evidence: &Evidence, targets: &[VarId]) -> Result<(), InferenceError> {
        if targets.is_empty() {
            return Err(InferenceError::InvalidArgument("no query targets".into()));
        }
        self.check_ids(targets)?;
        for (i, t) in targets.iter().enumerate() {
            if targets[..i].contains(t) {
                return Err(InferenceError::InvalidArgument(format!("target {t} repeated")));
            }
        }
        self.validate_evidence(evidence)
    }

    fn run_query(&self, evidence: &Evidence, targets: &[VarId], ibound: Option<usize>) -> Result<FactorTable, InferenceError> {
        self.check_query(evidence, targets)?;
        let free: Vec<VarId> = targets.iter().copied().filter(|t| !evidence.contains(*t)).collect();
        let (factors, order) = self.reduced_problem(evidence, &free);
        let out = eliminate(factors, &order, ibound)?;
        let mut joint = FactorTable::product_all(&out.factors);
        for &t in &free {
            if !joint.contains(t) {
                joint = joint.product(&FactorTable::ones(vec![t], vec![self.variables[t].domain_size]));
            }
        }
        let mut joint = joint.reorder(&free);
        if joint.normalize() == 0.0 {
            return Err(InferenceError::ZeroProbabilityEvidence);
        }
        if free.len() == targets.len() {
            return Ok(joint);
        }
        // Evidenced targets contribute point masses.
        let mut result = joint;
        for &t in targets.iter().filter(|t| evidence.contains(**t)) {
            let card = self.variables[t].domain_size;
            let mut point = vec![0.0; card];
            point[evidence.get(t).unwrap()] = 1.0;
            result = result.product(&FactorTable::new(vec![t], vec![card], point)?);
        }
        Ok(result.reorder(targets))
    }

    /// Exact `P(targets | evidence)` by bucket elimination.
    pub fn query_marginal(&self, evidence: &Evidence, targets: &[VarId]) -> Result<FactorTable, InferenceError> {
        self.run_query(evidence, targets, None)
    }

    /// Weighted mini-bucket approximation of [`Network::query_marginal`].
    pub fn wmb_query(
        &self,
        evidence: &Evidence,
        targets: &[VarId],
        ibound: usize,
    ) -> Result<FactorTable, InferenceError> {
        if ibound == 0 {
            return Err(InferenceError::InvalidArgument("ibound must be at least 1".into()));
        }
        self.run_query(evidence, targets, Some(ibound))
    }

    /// Largest bucket scope the exact query for `targets` would build.
    pub fn query_bucket_width(&self, evidence: &Evidence, targets: &[VarId]) -> usize {
        let free: Vec<VarId> = targets.iter().copied().filter(|t| !evidence.contains(*t)).collect();
        let (factors, order) = self.reduced_problem(evidence, &free);
        max_bucket_scope(factors.iter().map(|f| f.scope()), &order)
    }

    /// Chain-rule probability of a complete assignment.
    pub fn joint_probability(&self, assignment: &Evidence) -> Result<f64, InferenceError> {
        if assignment.len() != self.len() {
            return Err(InferenceError::InvalidArgument(format!(
                "assignment covers {} of {} variables",
                assignment.len(),
                self.len()
            )));
        }
        self.validate_evidence(assignment)?;
        Ok(self
            .cpts
            .iter()
            .map(|f| f.value_at(assignment.as_map()).expect("complete assignment"))
            .product())
    }

    /// `ln P(evidence)`; negative infinity when the evidence is impossible.
    pub fn log_evidence(&self, evidence: &Evidence) -> Result<f64, InferenceError> {
        self.validate_evidence(evidence)?;
        let (factors, order) = self.reduced_problem(evidence, &[]);
        match eliminate(factors, &order, None) {
            Ok(out) => {
                let rest: f64 = out.factors.iter().map(|f| f.total()).product();
                Ok(if rest > 0.0 { out.log_scale + rest.ln() } else { f64::NEG_INFINITY })
            }
            Err(InferenceError::ZeroProbabilityEvidence) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }

    /// `ln P(observed | given)`; the two sets must be disjoint.
    pub fn log_conditional(&self, observed: &Evidence, given: &Evidence) -> Result<f64, InferenceError> {
        if observed.iter().any(|(v, _)| given.contains(v)) {
            return Err(InferenceError::InvalidArgument("observed and conditioning sets overlap".into()));
        }
        let denom = self.log_evidence(given)?;
        if denom == f64::NEG_INFINITY {
            return Err(InferenceError::ZeroProbabilityEvidence);
        }
        let joint: Evidence = observed.iter().chain(given.iter()).collect();
        Ok(self.log_evidence(&joint)? - denom)
    }

    /// Same network with the conditional table of `var` replaced.
    pub fn with_cpt(&self, var: VarId, cpt: FactorTable) -> Result<Network, InferenceError> {
        let mut cpts = self.cpts.clone();
        cpts[var] = cpt;
        Network::new(self.variables.clone(), cpts)
    }

    /// True when both networks have the same variables and table scopes.
    pub fn same_structure(&self, other: &Network) -> bool {
        self.variables == other.variables
            && self.cpts.iter().zip(&other.cpts).all(|(a, b)| a.scope() == b.scope())
    }

    /// Variables in a parent-before-child order.
    pub fn topological_order(&self) -> Vec<VarId> {
        let mut order = Vec::with_capacity(self.len());
        let mut placed = vec![false; self.len()];
        while order.len() < self.len() {
            for v in 0..self.len() {
                if !placed[v] && self.parents(v).iter().all(|&p| placed[p]) {
                    placed[v] = true;
                    order.push(v);
                }
            }
        }
        order
    }

    /// Ancestral sample of every variable. Variables in `fixed` keep their
    /// value instead of being drawn, which samples the conditional exactly
    /// when only root variables are fixed.
    pub fn forward_sample<R: Rng + ?Sized>(&self, fixed: &Evidence, rng: &mut R) -> Result<Vec<usize>, InferenceError> {
        self.validate_evidence(fixed)?;
        let mut values = vec![0usize; self.len()];
        for v in self.topological_order() {
            if let Some(x) = fixed.get(v) {
                values[v] = x;
                continue;
            }
            let mut key: Vec<usize> = self.parents(v).iter().map(|&p| values[p]).collect();
            key.push(0);
            let card = self.variable(v).domain_size;
            let row: Vec<f64> = (0..card)
                .map(|x| {
                    *key.last_mut().expect("key has the child slot") = x;
                    self.cpt(v).get(&key)
                })
                .collect();
            let u: f64 = rng.gen::<f64>() * row.iter().sum::<f64>();
            let mut acc = 0.0;
            values[v] = card - 1;
            for (x, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    values[v] = x;
                    break;
                }
            }
        }
        Ok(values)
    }
}
