//! Skill-environment Bayesian networks.
//!
//! A network has three layers: environment features `E` (roots whose
//! distribution the curriculum controls), competencies `Ψ` (base
//! competencies carry free parameters `Φ_B`; derived ones are synthesised
//! from requirement lines) and binary targets `K`. Requirement lines state
//! which competency levels a target needs under which environment
//! conditions; [`synthesize_cpt`] turns them into conditional tables.

mod cpt;
mod parse;
mod query;

pub use cpt::{assemble_sebn, synthesize_cpt, EnvPrior};
pub use parse::{parse_requirements, parse_spec};
pub use query::{competency_posterior, predict_success, sample_outcomes, Outcomes, TaskDescriptor};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::InferenceError;

/// Failure rate used when a spec does not set `lambda`.
pub const DEFAULT_LAMBDA: f64 = 0.05;

const PHI_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("line {line}: {message} (at `{token}`)")]
    Parse { line: usize, token: String, message: String },
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cyclic requirements: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvVarDecl {
    pub name: String,
    pub domain_size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetencyDecl {
    pub name: String,
    pub domain_size: usize,
    pub is_base: bool,
}

/// `target : (feature=v, ... | requirement=level, ...)`
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequirementLine {
    pub target: String,
    pub env_conditions: Vec<(String, usize)>,
    pub requirements: Vec<(String, usize)>,
}

impl RequirementLine {
    /// True when every environment condition is met or exceeded.
    pub fn matches(&self, env: impl Fn(&str) -> usize) -> bool {
        self.env_conditions.iter().all(|(f, v)| env(f) >= *v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SebnSpec {
    pub env_vars: Vec<EnvVarDecl>,
    pub competency_vars: Vec<CompetencyDecl>,
    pub target_vars: Vec<String>,
    pub requirement_lines: Vec<RequirementLine>,
    pub lambda: f64,
    pub phi_base: BTreeMap<String, Vec<f64>>,
}

/// Base-competency parameters `Φ_B`, keyed by competency name.
pub type Phi = BTreeMap<String, Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kind {
    Env,
    Competency { base: bool },
    Target,
}

impl SebnSpec {
    /// Variable names in network order: environment, competencies, targets.
    pub fn variable_names(&self) -> Vec<&str> {
        self.env_vars
            .iter()
            .map(|v| v.name.as_str())
            .chain(self.competency_vars.iter().map(|c| c.name.as_str()))
            .chain(self.target_vars.iter().map(|t| t.as_str()))
            .collect()
    }

    pub(crate) fn kind_of(&self, name: &str) -> Option<Kind> {
        if self.env_vars.iter().any(|v| v.name == name) {
            Some(Kind::Env)
        } else if let Some(c) = self.competency_vars.iter().find(|c| c.name == name) {
            Some(Kind::Competency { base: c.is_base })
        } else if self.target_vars.iter().any(|t| t == name) {
            Some(Kind::Target)
        } else {
            None
        }
    }

    pub fn domain_size(&self, name: &str) -> Option<usize> {
        if let Some(v) = self.env_vars.iter().find(|v| v.name == name) {
            return Some(v.domain_size);
        }
        if let Some(c) = self.competency_vars.iter().find(|c| c.name == name) {
            return Some(c.domain_size);
        }
        self.target_vars.iter().any(|t| t == name).then_some(2)
    }

    pub fn base_competencies(&self) -> impl Iterator<Item = &CompetencyDecl> {
        self.competency_vars.iter().filter(|c| c.is_base)
    }

    pub fn lines_for<'a>(&'a self, target: &'a str) -> impl Iterator<Item = &'a RequirementLine> + 'a {
        self.requirement_lines.iter().filter(move |l| l.target == target)
    }

    /// Uniform parameters over each base competency's levels.
    pub fn uniform_phi(&self) -> Phi {
        self.base_competencies()
            .map(|c| (c.name.clone(), vec![1.0 / c.domain_size as f64; c.domain_size]))
            .collect()
    }

    /// Copy of this spec with `phi_base` replaced.
    pub fn with_phi(&self, phi: &Phi) -> Result<SebnSpec, SpecError> {
        let mut spec = self.clone();
        spec.phi_base = phi.clone();
        spec.check_phi()?;
        Ok(spec)
    }

    /// Full assignment count over the environment layer.
    pub fn env_space_size(&self) -> usize {
        self.env_vars.iter().map(|v| v.domain_size).product()
    }

    fn check_phi(&self) -> Result<(), SpecError> {
        let bases: BTreeSet<&str> = self.base_competencies().map(|c| c.name.as_str()).collect();
        for name in self.phi_base.keys() {
            if !bases.contains(name.as_str()) {
                return Err(SpecError::Invalid(format!("phi given for `{name}`, which is not a base competency")));
            }
        }
        for c in self.base_competencies() {
            let phi = self
                .phi_base
                .get(&c.name)
                .ok_or_else(|| SpecError::Invalid(format!("no phi for base competency `{}`", c.name)))?;
            check_distribution(&c.name, phi, c.domain_size)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let mut seen = BTreeSet::new();
        for name in self.variable_names() {
            if name.is_empty() {
                return Err(SpecError::Invalid("empty variable name".into()));
            }
            if !seen.insert(name) {
                return Err(SpecError::Invalid(format!("`{name}` declared twice")));
            }
        }
        for v in &self.env_vars {
            if v.domain_size == 0 {
                return Err(SpecError::Invalid(format!("environment feature `{}` has no values", v.name)));
            }
        }
        for c in &self.competency_vars {
            if c.domain_size == 0 {
                return Err(SpecError::Invalid(format!("competency `{}` has no levels", c.name)));
            }
            if !c.is_base && c.domain_size != 2 {
                return Err(SpecError::Invalid(format!(
                    "derived competency `{}` must be binary, found {} levels",
                    c.name, c.domain_size
                )));
            }
        }
        if !(self.lambda.is_finite() && (0.0..0.5).contains(&self.lambda)) {
            return Err(SpecError::Invalid(format!("lambda {} outside [0, 0.5)", self.lambda)));
        }
        self.check_phi()?;
        for line in &self.requirement_lines {
            match self.kind_of(&line.target) {
                Some(Kind::Target) | Some(Kind::Competency { base: false }) => {}
                Some(Kind::Competency { base: true }) => {
                    return Err(SpecError::Invalid(format!(
                        "`{}` is a base competency and cannot have requirement lines",
                        line.target
                    )))
                }
                _ => return Err(SpecError::Invalid(format!("unknown requirement target `{}`", line.target))),
            }
            let derived = matches!(self.kind_of(&line.target), Some(Kind::Competency { .. }));
            if derived && !line.env_conditions.is_empty() {
                return Err(SpecError::Invalid(format!(
                    "derived competency `{}` cannot depend on environment features",
                    line.target
                )));
            }
            for (f, v) in &line.env_conditions {
                if self.kind_of(f) != Some(Kind::Env) {
                    return Err(SpecError::Invalid(format!("`{f}` in `{}` is not an environment feature", line.target)));
                }
                let size = self.domain_size(f).unwrap();
                if *v >= size {
                    return Err(SpecError::Invalid(format!("`{f}={v}` outside domain of size {size}")));
                }
            }
            for (r, level) in &line.requirements {
                match self.kind_of(r) {
                    Some(Kind::Competency { .. }) | Some(Kind::Target) => {}
                    _ => {
                        return Err(SpecError::Invalid(format!(
                            "`{r}` in `{}` is not a competency or target",
                            line.target
                        )))
                    }
                }
                if r == &line.target {
                    return Err(SpecError::Cycle(vec![r.clone(), r.clone()]));
                }
                let size = self.domain_size(r).unwrap();
                if *level >= size {
                    return Err(SpecError::Invalid(format!("`{r}={level}` outside domain of size {size}")));
                }
            }
        }
        for c in self.competency_vars.iter().filter(|c| !c.is_base) {
            if self.lines_for(&c.name).next().is_none() {
                return Err(SpecError::Invalid(format!("derived competency `{}` has no requirement lines", c.name)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    pub fn from_json(text: &str) -> Result<SebnSpec, SpecError> {
        let spec: SebnSpec = serde_json::from_str(text).map_err(|e| SpecError::Invalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Renders the spec in the requirement text format accepted by
    /// [`parse_spec`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.env_vars {
            out += &format!("env {} {}\n", v.name, v.domain_size);
        }
        for c in &self.competency_vars {
            let tag = if c.is_base { "" } else { " derived" };
            out += &format!("competency {} {}{tag}\n", c.name, c.domain_size);
        }
        for t in &self.target_vars {
            out += &format!("target {t}\n");
        }
        out += &format!("lambda {}\n", self.lambda);
        for (name, phi) in &self.phi_base {
            let values: Vec<String> = phi.iter().map(|p| p.to_string()).collect();
            out += &format!("phi {name} {}\n", values.join(" "));
        }
        for line in &self.requirement_lines {
            let pairs = |xs: &[(String, usize)]| {
                xs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
            };
            out += &format!(
                "{} : ({} | {})\n",
                line.target,
                pairs(&line.env_conditions),
                pairs(&line.requirements)
            );
        }
        out
    }
}

pub(crate) fn check_distribution(name: &str, p: &[f64], size: usize) -> Result<(), SpecError> {
    if p.len() != size {
        return Err(SpecError::Invalid(format!("`{name}` has {} probabilities for {size} levels", p.len())));
    }
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(SpecError::Invalid(format!("`{name}` has a negative or non-finite probability")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PHI_TOLERANCE {
        return Err(SpecError::Invalid(format!("`{name}` probabilities sum to {total}")));
    }
    Ok(())
}

/// The shipped requirement specifications.
pub mod fixtures {
    pub const DOORKEY: &str = include_str!("../../../../specs/doorkey.spec");
    pub const BIPEDAL_WALKER: &str = include_str!("../../../../specs/bipedalwalker.spec");
    pub const ROBOSUITE: &str = include_str!("../../../../specs/robosuite.spec");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_of_fixtures() {
        for text in [fixtures::DOORKEY, fixtures::BIPEDAL_WALKER, fixtures::ROBOSUITE] {
            let spec = parse_spec(text).unwrap();
            let again = parse_spec(&spec.to_text()).unwrap();
            assert_eq!(again, spec);
        }
    }

    #[test]
    fn json_round_trip() {
        let spec = parse_spec(fixtures::DOORKEY).unwrap();
        assert_eq!(SebnSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn validation_catches_bad_levels() {
        let text = "env d 2\ncompetency m 2\ntarget t\nt : (d=1 | m=2)\n";
        assert!(matches!(parse_spec(text), Err(SpecError::Invalid(_))));
        let text = "env d 2\ncompetency m 2\ntarget t\nt : (m=1 | d=1)\n";
        assert!(matches!(parse_spec(text), Err(SpecError::Invalid(_))));
    }

    #[test]
    fn lambda_range() {
        let text = "competency m 2\ntarget t\nlambda 0.5\nt : ( | m=1)\n";
        assert!(parse_spec(text).is_err());
        let text = "competency m 2\ntarget t\nlambda 0\nt : ( | m=1)\n";
        assert_eq!(parse_spec(text).unwrap().lambda, 0.0);
    }
}
