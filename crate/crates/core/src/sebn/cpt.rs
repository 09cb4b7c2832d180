use std::collections::{BTreeMap, BTreeSet};

use crate::bayes::{AssignmentIter, DiscreteVariable, FactorTable, Layer, Network, VarId};

use super::{check_distribution, Kind, SebnSpec, SpecError, TaskDescriptor};

/// Independent per-feature distributions for the environment layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvPrior(pub BTreeMap<String, Vec<f64>>);

impl EnvPrior {
    pub fn uniform(spec: &SebnSpec) -> Self {
        Self(
            spec.env_vars
                .iter()
                .map(|v| (v.name.clone(), vec![1.0 / v.domain_size as f64; v.domain_size]))
                .collect(),
        )
    }

    /// Per-feature frequencies over `tasks` with `pseudo_count` added to every
    /// value. A positive pseudo-count keeps every feature value possible, so
    /// partial assignments never become zero-probability evidence.
    pub fn empirical<'a>(
        spec: &SebnSpec,
        tasks: impl IntoIterator<Item = &'a TaskDescriptor>,
        pseudo_count: f64,
    ) -> Self {
        let mut counts: BTreeMap<String, Vec<f64>> = spec
            .env_vars
            .iter()
            .map(|v| (v.name.clone(), vec![pseudo_count; v.domain_size]))
            .collect();
        for task in tasks {
            for (name, value) in &task.env {
                if let Some(c) = counts.get_mut(name).and_then(|c| c.get_mut(*value)) {
                    *c += 1.0;
                }
            }
        }
        for c in counts.values_mut() {
            let total: f64 = c.iter().sum();
            if total > 0.0 {
                c.iter_mut().for_each(|x| *x /= total);
            } else {
                let n = c.len() as f64;
                c.iter_mut().for_each(|x| *x = 1.0 / n);
            }
        }
        Self(counts)
    }

    pub fn get(&self, feature: &str) -> Option<&[f64]> {
        self.0.get(feature).map(|v| v.as_slice())
    }
}

fn index_of(spec: &SebnSpec) -> BTreeMap<&str, VarId> {
    spec.variable_names().into_iter().enumerate().map(|(i, n)| (n, i)).collect()
}

/// Conditional table for a target or derived competency.
///
/// Parents are every feature, competency and target mentioned by the
/// target's requirement lines, in network order, with the target last. A
/// line applies to a parent assignment when each of its environment
/// conditions is met or exceeded; each requirement's threshold is the
/// largest level demanded by any applicable line. The target succeeds with
/// probability `1 - lambda` when every threshold is met and `lambda`
/// otherwise.
pub fn synthesize_cpt(spec: &SebnSpec, target: &str) -> Result<FactorTable, SpecError> {
    match spec.kind_of(target) {
        Some(Kind::Target) | Some(Kind::Competency { base: false }) => {}
        Some(_) => {
            return Err(SpecError::InvalidArgument(format!(
                "`{target}` is not a target or derived competency"
            )))
        }
        None => return Err(SpecError::InvalidArgument(format!("unknown variable `{target}`"))),
    }
    let lines: Vec<_> = spec.lines_for(target).collect();
    if lines.is_empty() {
        return Err(SpecError::Config(format!("`{target}` has no requirement lines")));
    }
    let index = index_of(spec);
    let id = |name: &str| -> Result<VarId, SpecError> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| SpecError::Invalid(format!("undeclared variable `{name}`")))
    };
    let mut parents = BTreeSet::new();
    for line in &lines {
        for (f, _) in &line.env_conditions {
            parents.insert(id(f)?);
        }
        for (r, _) in &line.requirements {
            parents.insert(id(r)?);
        }
    }
    let parents: Vec<VarId> = parents.into_iter().collect();
    let names = spec.variable_names();
    let cards: Vec<usize> = parents
        .iter()
        .map(|&p| spec.domain_size(names[p]).expect("declared"))
        .collect();
    let slot: BTreeMap<&str, usize> = parents.iter().enumerate().map(|(k, &p)| (names[p], k)).collect();

    let lambda = spec.lambda;
    let mut values = Vec::with_capacity(2 * cards.iter().product::<usize>());
    for assignment in AssignmentIter::new(cards.clone()) {
        let mut needed: BTreeMap<&str, usize> = BTreeMap::new();
        for line in lines.iter().filter(|l| l.matches(|f| assignment[slot[f]])) {
            for (r, level) in &line.requirements {
                let e = needed.entry(r.as_str()).or_insert(0);
                *e = (*e).max(*level);
            }
        }
        let met = needed.iter().all(|(r, level)| assignment[slot[r]] >= *level);
        if met {
            values.extend([lambda, 1.0 - lambda]);
        } else {
            values.extend([1.0 - lambda, lambda]);
        }
    }
    let child = id(target)?;
    let mut scope = parents;
    scope.push(child);
    let mut cards = cards;
    cards.push(2);
    Ok(FactorTable::new(scope, cards, values)?)
}

fn find_requirement_cycle(spec: &SebnSpec) -> Option<Vec<String>> {
    let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for line in &spec.requirement_lines {
        for (r, _) in &line.requirements {
            edges.entry(line.target.as_str()).or_default().insert(r.as_str());
        }
    }
    // Iterative DFS with colouring; a grey hit closes a cycle.
    let mut colour: BTreeMap<&str, u8> = BTreeMap::new();
    for &start in edges.keys() {
        if colour.get(start).copied().unwrap_or(0) != 0 {
            continue;
        }
        let mut stack: Vec<(&str, Vec<&str>)> = vec![(start, edges[start].iter().copied().collect())];
        colour.insert(start, 1);
        while let Some(top) = stack.last_mut() {
            let node = top.0;
            match top.1.pop() {
                Some(next) => match colour.get(next).copied().unwrap_or(0) {
                    0 => {
                        colour.insert(next, 1);
                        let succ = edges.get(next).map(|s| s.iter().copied().collect()).unwrap_or_default();
                        stack.push((next, succ));
                    }
                    1 => {
                        let pos = stack.iter().position(|(n, _)| *n == next).unwrap();
                        let mut cycle: Vec<String> = stack[pos..].iter().map(|(n, _)| n.to_string()).collect();
                        cycle.push(next.to_string());
                        return Some(cycle);
                    }
                    _ => {}
                },
                None => {
                    colour.insert(node, 2);
                    stack.pop();
                }
            }
        }
    }
    None
}

/// Builds the network for `spec`: base competencies from `phi_base`,
/// synthesised tables for derived competencies and targets, and environment
/// priors from `env_prior` (uniform per feature when absent).
pub fn assemble_sebn(spec: &SebnSpec, env_prior: Option<&EnvPrior>) -> Result<Network, SpecError> {
    spec.validate()?;
    if let Some(cycle) = find_requirement_cycle(spec) {
        return Err(SpecError::Cycle(cycle));
    }
    let uniform;
    let prior = match env_prior {
        Some(p) => p,
        None => {
            uniform = EnvPrior::uniform(spec);
            &uniform
        }
    };
    let mut variables = Vec::new();
    let mut cpts = Vec::new();
    for v in &spec.env_vars {
        let id = variables.len();
        let p = prior
            .get(&v.name)
            .ok_or_else(|| SpecError::InvalidArgument(format!("no prior for feature `{}`", v.name)))?;
        check_distribution(&v.name, p, v.domain_size)?;
        variables.push(DiscreteVariable::new(v.name.clone(), v.domain_size, Layer::Environment));
        cpts.push(FactorTable::new(vec![id], vec![v.domain_size], p.to_vec())?);
    }
    for c in &spec.competency_vars {
        let id = variables.len();
        variables.push(DiscreteVariable::new(c.name.clone(), c.domain_size, Layer::Competency));
        if c.is_base {
            cpts.push(FactorTable::new(vec![id], vec![c.domain_size], spec.phi_base[&c.name].clone())?);
        } else {
            cpts.push(synthesize_cpt(spec, &c.name)?);
        }
    }
    for t in &spec.target_vars {
        variables.push(DiscreteVariable::new(t.clone(), 2, Layer::Target));
        cpts.push(synthesize_cpt(spec, t)?);
    }
    Ok(Network::new(variables, cpts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sebn::{fixtures, parse_spec};

    fn haskey_spec(lambda: f64) -> SebnSpec {
        parse_spec(&format!(
            "env distance 2\ncompetency move 3\ncompetency pick_up 2\ntarget haskey\nlambda {lambda}\n\
             haskey : (distance=0 | move=1, pick up=1)\nhaskey : (distance=1 | move=2, pick up=1)\n"
        ))
        .unwrap()
    }

    #[test]
    fn haskey_thresholds() {
        let spec = haskey_spec(0.05);
        let cpt = synthesize_cpt(&spec, "haskey").unwrap();
        // scope: distance, move, pick_up, haskey
        assert_eq!(cpt.scope(), &[0, 1, 2, 3]);
        assert_eq!(cpt.get(&[1, 2, 1, 1]), 1.0 - 0.05);
        assert_eq!(cpt.get(&[1, 1, 1, 1]), 0.05);
        assert_eq!(cpt.get(&[0, 1, 1, 1]), 1.0 - 0.05);
    }

    #[test]
    fn vacuous_line_gives_constant_row() {
        let spec = parse_spec("target t\nlambda 0.1\nt : ( | )\n").unwrap();
        let cpt = synthesize_cpt(&spec, "t").unwrap();
        assert_eq!(cpt.scope().len(), 1);
        assert_eq!(cpt.values(), &[0.1, 0.9]);
    }

    #[test]
    fn target_without_lines_is_config_error() {
        let spec = parse_spec("competency m 2\ntarget t\ntarget u\nt : ( | m=1)\n").unwrap();
        assert!(matches!(synthesize_cpt(&spec, "u"), Err(SpecError::Config(_))));
        assert!(matches!(assemble_sebn(&spec, None), Err(SpecError::Config(_))));
        assert!(matches!(synthesize_cpt(&spec, "m"), Err(SpecError::InvalidArgument(_))));
    }

    #[test]
    fn doorkey_goalreached_rows() {
        let spec = parse_spec(fixtures::DOORKEY).unwrap();
        let cpt = synthesize_cpt(&spec, "goalreached").unwrap();
        let names = spec.variable_names();
        let scope: Vec<&str> = cpt.scope().iter().map(|&v| names[v]).collect();
        assert_eq!(
            scope,
            ["distance", "wall", "exists_door", "move", "avoid_wall", "dooropened", "haskey", "goalreached"]
        );
        let l = spec.lambda;
        assert_eq!(cpt.get(&[1, 1, 1, 2, 1, 1, 1, 1]), 1.0 - l);
        assert_eq!(cpt.get(&[1, 1, 1, 2, 0, 1, 1, 1]), l);
    }

    #[test]
    fn sizes_of_shipped_networks() {
        let count = |net: &Network, layer: Layer| net.variables().iter().filter(|v| v.layer == layer).count();
        let dk = assemble_sebn(&parse_spec(fixtures::DOORKEY).unwrap(), None).unwrap();
        assert_eq!(
            (count(&dk, Layer::Environment), count(&dk, Layer::Competency), count(&dk, Layer::Target)),
            (3, 5, 3)
        );
        let bw = assemble_sebn(&parse_spec(fixtures::BIPEDAL_WALKER).unwrap(), None).unwrap();
        assert_eq!(
            (count(&bw, Layer::Environment), count(&bw, Layer::Competency), count(&bw, Layer::Target)),
            (5, 5, 1)
        );
        assert!(bw.variables().iter().filter(|v| v.layer == Layer::Competency).all(|v| v.domain_size == 3));
        let rs = assemble_sebn(&parse_spec(fixtures::ROBOSUITE).unwrap(), None).unwrap();
        assert_eq!(rs.len(), 6);
    }

    #[test]
    fn minimal_two_node_network() {
        let spec = parse_spec("competency c 2\ntarget t\nt : ( | c=1)\n").unwrap();
        let net = assemble_sebn(&spec, None).unwrap();
        assert_eq!(net.len(), 2);
        assert_eq!(net.cpt(1), &synthesize_cpt(&spec, "t").unwrap());
    }

    #[test]
    fn mutual_requirements_are_a_cycle() {
        let spec = parse_spec("competency c 2\ntarget a\ntarget b\na : ( | b=1)\nb : ( | a=1)\n").unwrap();
        match assemble_sebn(&spec, None) {
            Err(SpecError::Cycle(c)) => {
                assert_eq!(c.first(), c.last());
                assert!(c.contains(&"a".to_string()) && c.contains(&"b".to_string()));
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn derived_competency_hierarchy() {
        let spec = parse_spec(
            "competency walk 2\ncompetency run 2 derived\ntarget t\nlambda 0\n\
             phi walk 0 1\nrun : ( | walk=1)\nt : ( | run=1)\n",
        )
        .unwrap();
        let net = assemble_sebn(&spec, None).unwrap();
        let m = net.query_marginal(&Default::default(), &[net.id("t").unwrap()]).unwrap();
        assert_eq!(m.values(), &[0.0, 1.0]);
    }

    #[test]
    fn empirical_prior_smooths() {
        let spec = parse_spec(fixtures::DOORKEY).unwrap();
        let task = TaskDescriptor::new([("distance", 1), ("wall", 0), ("exists_door", 0)], ["goalreached"]);
        let prior = EnvPrior::empirical(&spec, [&task, &task], 1.0);
        assert_eq!(prior.get("distance").unwrap(), &[0.25, 0.75]);
        assert_eq!(prior.get("wall").unwrap(), &[0.75, 0.25]);
    }
}
