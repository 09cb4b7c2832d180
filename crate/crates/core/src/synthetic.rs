//! Synthetic success oracle for domains without a simulator.
//!
//! The learner keeps a hidden skill level per base competency. Outcomes of
//! an episode are sampled from the SEBN parameterised by those hidden
//! skills, and practising a task raises the skills its matching
//! requirement lines ask for, quickly after a success and slowly after a
//! failure.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::learner::{EnvFactory, EpisodeLearner, HasTask, LearnerError};
use crate::sebn::{assemble_sebn, sample_outcomes, Outcomes, Phi, SebnSpec, TaskDescriptor};

/// One episode's worth of environment: the task and a seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticEnv {
    pub task: TaskDescriptor,
    pub seed: u64,
}

impl HasTask for SyntheticEnv {
    fn task(&self) -> &TaskDescriptor {
        &self.task
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFactory {
    pub spec: SebnSpec,
}

impl EnvFactory for SyntheticFactory {
    type Env = SyntheticEnv;
    fn make(&self, task: &TaskDescriptor, seed: u64) -> Result<SyntheticEnv, LearnerError> {
        task.validate(&self.spec).map_err(|e| LearnerError::Env(e.to_string()))?;
        Ok(SyntheticEnv { task: task.clone(), seed })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticLearner {
    pub spec: SebnSpec,
    /// Continuous skill per base competency, in `0..=levels-1`.
    pub skills: BTreeMap<String, f64>,
    /// Skill gained per practised requirement after a success.
    pub rate: f64,
    /// Fraction of `rate` gained after a failure.
    pub failure_gain: f64,
    pub seed: u64,
}

impl SyntheticLearner {
    pub fn new(spec: SebnSpec, rate: f64, seed: u64) -> Self {
        let skills = spec.base_competencies().map(|c| (c.name.clone(), 0.0)).collect();
        Self { spec, skills, rate, failure_gain: 0.1, seed }
    }

    /// The hidden `Φ_B`: mass split between the two levels around each
    /// skill value.
    pub fn hidden_phi(&self) -> Phi {
        self.spec
            .base_competencies()
            .map(|c| {
                let s = self.skills.get(&c.name).copied().unwrap_or(0.0).clamp(0.0, (c.domain_size - 1) as f64);
                let lo = s.floor() as usize;
                let frac = s - lo as f64;
                let mut p = vec![0.0; c.domain_size];
                p[lo] = 1.0 - frac;
                if frac > 0.0 {
                    p[lo + 1] = frac;
                }
                (c.name.clone(), p)
            })
            .collect()
    }

    fn sample(&self, env: &SyntheticEnv) -> Result<Outcomes, LearnerError> {
        let spec = self.spec.with_phi(&self.hidden_phi()).map_err(|e| LearnerError::Env(e.to_string()))?;
        let network = assemble_sebn(&spec, None).map_err(|e| LearnerError::Env(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ env.seed.rotate_left(17));
        sample_outcomes(&network, &env.task, &mut rng).map_err(|e| LearnerError::Env(e.to_string()))
    }

    fn practise(&mut self, task: &TaskDescriptor, outcomes: &Outcomes) {
        let env = |f: &str| task.env.get(f).copied().unwrap_or(0);
        let mut wanted: BTreeMap<String, usize> = BTreeMap::new();
        for target in &task.enabled_targets {
            for line in self.spec.lines_for(target).filter(|l| l.matches(env)) {
                for (name, level) in &line.requirements {
                    if self.skills.contains_key(name) {
                        let w = wanted.entry(name.clone()).or_insert(0);
                        *w = (*w).max(*level);
                    }
                }
            }
        }
        let success = outcomes.values().all(|&ok| ok);
        let gain = if success { self.rate } else { self.rate * self.failure_gain };
        for (name, level) in wanted {
            let s = self.skills.get_mut(&name).expect("only base competencies are collected");
            if *s < level as f64 {
                *s = (*s + gain).min(level as f64);
            }
        }
    }
}

impl EpisodeLearner<SyntheticEnv> for SyntheticLearner {
    fn run_episode(&mut self, env: &mut SyntheticEnv) -> Result<Outcomes, LearnerError> {
        let outcomes = self.sample(env)?;
        self.practise(&env.task, &outcomes);
        Ok(outcomes)
    }

    fn evaluate_episode(&mut self, env: &mut SyntheticEnv) -> Result<Outcomes, LearnerError> {
        self.sample(env)
    }
}
