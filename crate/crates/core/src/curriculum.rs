//! Task distribution and the generation loop of the automated curriculum.
//!
//! Each generation samples tasks from the distribution, lets the learner
//! play one episode per task, re-estimates the competencies from the
//! rollouts and moves probability towards tasks whose predicted success
//! changed the most:
//!
//! ```text
//! F(m)     = (P_t(m) - P_{t-1}(m))^2
//! P_{t+1}  = 0.5 * F / sum(F) + 0.5 * P_t
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::Network;
use crate::estimator::{estimate_phi_weighted, EmConfig, PhiEstimate, RolloutRecord};
use crate::learner::{EnvFactory, EpisodeLearner};
use crate::search::{enumerate_env_space, exhaustive_rank, select_candidates, CandidateSet, SearchConfig, SearchMode};
use crate::sebn::{assemble_sebn, predict_success, EnvPrior, Outcomes, Phi, SebnSpec, SpecError, TaskDescriptor};

/// Below this total fitness the update falls back to uniform fitness.
pub const FITNESS_FLOOR: f64 = 1e-12;

pub const DEFAULT_GENERATION_SIZE: usize = 32;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("history: {0}")]
    History(String),
}

/// Which curriculum drives task selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Fitness-weighted updates from the estimated competencies.
    Sebn,
    /// Fixed uniform distribution over the task space.
    Uniform,
    /// Inverted fitness, favouring tasks whose prediction moved least.
    Anti,
    /// Always train on the evaluation task.
    None,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sebn, Variant::Uniform, Variant::Anti, Variant::None];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sebn => "sebn",
            Variant::Uniform => "uniform",
            Variant::Anti => "anti",
            Variant::None => "none",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CurriculumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| CurriculumError::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Uniform,
    /// Weight proportional to `2^-difficulty`.
    EasyBiased,
}

/// How the anti-curriculum inverts the fitness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntiFormula {
    /// `1 - Δ²`
    #[default]
    OneMinusSquare,
    /// `(1 - |Δ|)²`
    SquareOfComplement,
}

/// Which targets a task enables, given its environment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRule {
    /// Enabled in every task.
    pub always: Vec<String>,
    /// Enabled when the named feature is at least the given value.
    #[serde(default)]
    pub gated: Vec<GatedTarget>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatedTarget {
    pub target: String,
    pub feature: String,
    pub min_value: usize,
}

impl TargetRule {
    /// Every target of `spec` in every task.
    pub fn all_targets(spec: &SebnSpec) -> Self {
        Self { always: spec.target_vars.clone(), gated: Vec::new() }
    }

    /// DoorKey: the goal always, the key and door targets only when a
    /// locked door exists.
    pub fn doorkey() -> Self {
        use crate::megagrid::{DOOR_OPENED, EXISTS_DOOR, GOAL_REACHED, HAS_KEY};
        let gate = |t: &str| GatedTarget { target: t.into(), feature: EXISTS_DOOR.into(), min_value: 1 };
        Self { always: vec![GOAL_REACHED.into()], gated: vec![gate(HAS_KEY), gate(DOOR_OPENED)] }
    }

    pub fn task(&self, env: BTreeMap<String, usize>) -> TaskDescriptor {
        let mut targets: BTreeSet<String> = self.always.iter().cloned().collect();
        for g in &self.gated {
            if env.get(&g.feature).copied().unwrap_or(0) >= g.min_value {
                targets.insert(g.target.clone());
            }
        }
        TaskDescriptor { env, enabled_targets: targets }
    }

    pub fn validate(&self, spec: &SebnSpec) -> Result<(), CurriculumError> {
        if self.always.is_empty() {
            return Err(CurriculumError::InvalidArgument("target rule enables nothing unconditionally".into()));
        }
        for t in self.always.iter().chain(self.gated.iter().map(|g| &g.target)) {
            if !spec.target_vars.contains(t) {
                return Err(CurriculumError::InvalidArgument(format!("`{t}` is not a target")));
            }
        }
        for g in &self.gated {
            if !spec.env_vars.iter().any(|v| v.name == g.feature) {
                return Err(CurriculumError::InvalidArgument(format!("`{}` is not a feature", g.feature)));
            }
        }
        Ok(())
    }
}

/// The enabled target that no other enabled target depends on.
pub fn terminal_target(spec: &SebnSpec, enabled: &BTreeSet<String>) -> Result<String, CurriculumError> {
    let required: BTreeSet<&str> = spec
        .requirement_lines
        .iter()
        .filter(|l| enabled.contains(&l.target))
        .flat_map(|l| l.requirements.iter().map(|(name, _)| name.as_str()))
        .collect();
    let tops: Vec<&String> = enabled.iter().filter(|t| !required.contains(t.as_str())).collect();
    match tops.as_slice() {
        [one] => Ok((*one).clone()),
        _ => Err(CurriculumError::InvalidArgument(format!(
            "expected exactly one terminal target among {enabled:?}, found {tops:?}"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDistribution {
    pub support: Vec<TaskDescriptor>,
    pub weights: Vec<f64>,
    pub generation: usize,
}

impl TaskDistribution {
    pub fn init(tasks: Vec<TaskDescriptor>, mode: InitMode) -> Result<Self, CurriculumError> {
        if tasks.is_empty() {
            return Err(CurriculumError::InvalidArgument("empty task list".into()));
        }
        let unique: BTreeSet<&TaskDescriptor> = tasks.iter().collect();
        if unique.len() != tasks.len() {
            return Err(CurriculumError::InvalidArgument("duplicate tasks in support".into()));
        }
        let raw: Vec<f64> = match mode {
            InitMode::Uniform => vec![1.0; tasks.len()],
            InitMode::EasyBiased => tasks.iter().map(|t| 0.5f64.powi(t.difficulty() as i32)).collect(),
        };
        let total: f64 = raw.iter().sum();
        Ok(Self { support: tasks, weights: raw.iter().map(|w| w / total).collect(), generation: 0 })
    }

    pub fn weight_of(&self, task: &TaskDescriptor) -> f64 {
        self.support.iter().position(|t| t == task).map_or(0.0, |i| self.weights[i])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &TaskDescriptor {
        let index = WeightedIndex::new(&self.weights).expect("weights are validated on construction");
        &self.support[index.sample(rng)]
    }

    pub fn expected_difficulty(&self) -> f64 {
        self.support.iter().zip(&self.weights).map(|(t, w)| t.difficulty() as f64 * w).sum()
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        let total: f64 = self.weights.iter().sum();
        if self.support.len() != self.weights.len()
            || self.weights.iter().any(|w| w.is_nan() || *w < 0.0)
            || (total - 1.0).abs() > 1e-9
        {
            return Err(CurriculumError::InvalidArgument("weights must be non-negative and sum to 1".into()));
        }
        Ok(())
    }
}

/// `(curr - prev)²`
pub fn fitness(prev_pred: f64, curr_pred: f64) -> f64 {
    (curr_pred - prev_pred).powi(2)
}

pub fn anti_fitness(prev_pred: f64, curr_pred: f64, formula: AntiFormula) -> f64 {
    let d = curr_pred - prev_pred;
    match formula {
        AntiFormula::OneMinusSquare => 1.0 - d * d,
        AntiFormula::SquareOfComplement => (1.0 - d.abs()).powi(2),
    }
}

/// Result of one distribution update.
#[derive(Clone, Debug, PartialEq)]
pub struct Update {
    pub distribution: TaskDistribution,
    /// True when the fitness total was too small and uniform fitness was used.
    pub fallback: bool,
}

fn smoothed(old: &[f64], fitness: &[f64], scored: &[bool]) -> (Vec<f64>, bool) {
    let total: f64 = fitness.iter().zip(scored).filter(|(_, &s)| s).map(|(f, _)| f).sum();
    let count = scored.iter().filter(|&&s| s).count() as f64;
    let fallback = total < FITNESS_FLOOR;
    let mut w: Vec<f64> = old
        .iter()
        .zip(fitness)
        .zip(scored)
        .map(|((&o, &f), &s)| {
            let term = match (s, fallback) {
                (false, _) => 0.0,
                (true, true) => 1.0 / count,
                (true, false) => f / total,
            };
            0.5 * term + 0.5 * o
        })
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    (w, fallback)
}

fn check_fitness(scores: &[(TaskDescriptor, f64)]) -> Result<(), CurriculumError> {
    if let Some((t, f)) = scores.iter().find(|(_, f)| !(f.is_finite() && *f >= 0.0)) {
        return Err(CurriculumError::InvalidArgument(format!("fitness {f} for `{t}`")));
    }
    let unique: BTreeSet<&TaskDescriptor> = scores.iter().map(|(t, _)| t).collect();
    if unique.len() != scores.len() {
        return Err(CurriculumError::InvalidArgument("task scored twice".into()));
    }
    Ok(())
}

/// The smoothed update with a fitness value for exactly the tasks of the
/// support (in any order).
pub fn update_distribution(dist: &TaskDistribution, scores: &[(TaskDescriptor, f64)]) -> Result<Update, CurriculumError> {
    check_fitness(scores)?;
    let by_task: BTreeMap<&TaskDescriptor, f64> = scores.iter().map(|(t, f)| (t, *f)).collect();
    if by_task.len() != dist.support.len() || dist.support.iter().any(|t| !by_task.contains_key(t)) {
        return Err(CurriculumError::InvalidArgument("fitness does not cover exactly the support".into()));
    }
    let fitness: Vec<f64> = dist.support.iter().map(|t| by_task[t]).collect();
    let (weights, fallback) = smoothed(&dist.weights, &fitness, &vec![true; fitness.len()]);
    Ok(Update {
        distribution: TaskDistribution { support: dist.support.clone(), weights, generation: dist.generation + 1 },
        fallback,
    })
}

/// The smoothed update over a scored subset that may add new tasks: new
/// tasks join the support with old weight 0, support tasks that were not
/// scored keep half their old weight, and the result is renormalised.
pub fn update_partial(dist: &TaskDistribution, scores: &[(TaskDescriptor, f64)]) -> Result<Update, CurriculumError> {
    check_fitness(scores)?;
    if scores.is_empty() {
        return Err(CurriculumError::InvalidArgument("no scored tasks".into()));
    }
    let mut support = dist.support.clone();
    let mut old = dist.weights.clone();
    for (t, _) in scores {
        if !support.contains(t) {
            support.push(t.clone());
            old.push(0.0);
        }
    }
    let by_task: BTreeMap<&TaskDescriptor, f64> = scores.iter().map(|(t, f)| (t, *f)).collect();
    let fitness: Vec<f64> = support.iter().map(|t| by_task.get(t).copied().unwrap_or(0.0)).collect();
    let scored: Vec<bool> = support.iter().map(|t| by_task.contains_key(t)).collect();
    let (weights, fallback) = smoothed(&old, &fitness, &scored);
    Ok(Update { distribution: TaskDistribution { support, weights, generation: dist.generation + 1 }, fallback })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub variant: Variant,
    /// Episodes per generation.
    pub generation_size: usize,
    pub init: InitMode,
    pub anti_formula: AntiFormula,
    pub em: EmConfig,
    pub search: SearchConfig,
    /// Weight `decay^age` for rollouts of earlier generations in the
    /// estimate; `None` uses the current generation only.
    pub history_decay: Option<f64>,
    /// Pseudo-count of the empirical environment prior.
    pub prior_pseudo_count: f64,
    pub seed: u64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Sebn,
            generation_size: DEFAULT_GENERATION_SIZE,
            init: InitMode::Uniform,
            anti_formula: AntiFormula::OneMinusSquare,
            em: EmConfig::default(),
            search: SearchConfig::default(),
            history_decay: None,
            prior_pseudo_count: 1.0,
            seed: 0,
        }
    }
}

/// Per-task record of one generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskStats {
    pub task: TaskDescriptor,
    pub previous_weight: f64,
    pub weight: f64,
    /// `None` when the task was not scored this generation.
    pub fitness: Option<f64>,
    /// Terminal-target prediction under the previous estimate.
    pub pred_prev: Option<f64>,
    /// Terminal-target prediction under the new estimate.
    pub pred_curr: Option<f64>,
    /// New-estimate prediction for every enabled target.
    pub target_predictions: BTreeMap<String, f64>,
    /// Per-target success frequency over this generation's episodes.
    pub realized: BTreeMap<String, f64>,
    pub episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub tasks: Vec<TaskStats>,
    pub estimate: PhiEstimate,
    pub fallback: bool,
    /// Episodes this generation where the learner failed and the rollout
    /// was recorded as all-false.
    pub learner_failures: usize,
    pub candidates: Option<CandidateSet>,
    pub expected_difficulty: f64,
}

/// Everything the generation loop carries from one generation to the next.
#[derive(Clone, Debug)]
pub struct CurriculumState {
    pub spec: SebnSpec,
    pub rule: TargetRule,
    pub config: CurriculumConfig,
    pub distribution: TaskDistribution,
    pub phi: Phi,
    pub env_prior: EnvPrior,
    /// Training task of the `none` variant.
    pub eval_task: TaskDescriptor,
    pub rollouts: Vec<RolloutRecord>,
    pub history: Vec<GenerationStats>,
    pub learner_failures: usize,
    rng: ChaCha8Rng,
}

/// Tasks the distribution starts from: the whole space when it is small
/// enough to rank exhaustively, otherwise every configuration with at most
/// one non-zero feature.
pub fn initial_tasks(spec: &SebnSpec, rule: &TargetRule, search: &SearchConfig) -> Result<Vec<TaskDescriptor>, CurriculumError> {
    let network = assemble_sebn(spec, None)?;
    let space = if spec.env_space_size() <= search.exhaustive_threshold {
        enumerate_env_space(&network, &search.ordering)?
    } else {
        let mut v = vec![spec.env_vars.iter().map(|e| (e.name.clone(), 0)).collect::<BTreeMap<_, _>>()];
        for e in &spec.env_vars {
            for x in 1..e.domain_size {
                let mut env = v[0].clone();
                env.insert(e.name.clone(), x);
                v.push(env);
            }
        }
        v
    };
    Ok(space.into_iter().map(|env| rule.task(env)).collect())
}

impl CurriculumState {
    pub fn new(
        spec: SebnSpec,
        rule: TargetRule,
        eval_task: TaskDescriptor,
        config: CurriculumConfig,
    ) -> Result<Self, CurriculumError> {
        spec.validate()?;
        rule.validate(&spec)?;
        eval_task.validate(&spec)?;
        if config.generation_size == 0 {
            return Err(CurriculumError::InvalidArgument("generation size must be at least 1".into()));
        }
        if let Some(d) = config.history_decay {
            if !(0.0..=1.0).contains(&d) {
                return Err(CurriculumError::InvalidArgument(format!("history decay {d} outside [0, 1]")));
            }
        }
        let distribution = match config.variant {
            Variant::None => TaskDistribution::init(vec![eval_task.clone()], InitMode::Uniform)?,
            Variant::Uniform => TaskDistribution::init(initial_tasks(&spec, &rule, &config.search)?, InitMode::Uniform)?,
            Variant::Sebn | Variant::Anti => {
                TaskDistribution::init(initial_tasks(&spec, &rule, &config.search)?, config.init)?
            }
        };
        let phi = spec.phi_base.clone();
        let env_prior = EnvPrior::uniform(&spec);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            spec,
            rule,
            config,
            distribution,
            phi,
            env_prior,
            eval_task,
            rollouts: Vec::new(),
            history: Vec::new(),
            learner_failures: 0,
            rng,
        })
    }

    pub fn generation(&self) -> usize {
        self.distribution.generation
    }

    fn network(&self, phi: &Phi, prior: &EnvPrior) -> Result<Network, CurriculumError> {
        Ok(assemble_sebn(&self.spec.with_phi(phi)?, Some(prior))?)
    }

    /// EM settings of one generation; restarts are reseeded per generation.
    pub fn em_config(&self, generation: usize) -> EmConfig {
        EmConfig { seed: self.config.em.seed ^ (generation as u64).wrapping_mul(0x9E37_79B9), ..self.config.em.clone() }
    }

    fn estimate(&self, generation: usize) -> Result<PhiEstimate, CurriculumError> {
        let em = self.em_config(generation);
        let weighted: Vec<(&RolloutRecord, f64)> = self
            .rollouts
            .iter()
            .filter_map(|r| {
                let age = generation.checked_sub(r.generation)?;
                match self.config.history_decay {
                    None if age == 0 => Some((r, 1.0)),
                    None => None,
                    Some(d) => {
                        let w = d.powi(age as i32);
                        (w > 1e-9).then_some((r, w))
                    }
                }
            })
            .collect();
        Ok(estimate_phi_weighted(&self.spec, weighted, &em)?)
    }

    /// Tasks to score and the ranked configurations behind them. Small
    /// spaces are scored in full; large ones score the support plus the
    /// candidates found by the best-first search.
    fn scored_tasks(&self, prev: &Network, next: &Network) -> Result<(Vec<TaskDescriptor>, Option<CandidateSet>), CurriculumError> {
        if self.config.variant == Variant::None {
            return Ok((self.distribution.support.clone(), None));
        }
        let search = &self.config.search;
        let hardest: BTreeMap<String, usize> =
            self.spec.env_vars.iter().map(|v| (v.name.clone(), v.domain_size - 1)).collect();
        let target = terminal_target(&self.spec, &self.rule.task(hardest).enabled_targets)?;
        let mode = if self.config.variant == Variant::Anti { SearchMode::Min } else { SearchMode::Max };
        if self.spec.env_space_size() <= search.exhaustive_threshold {
            let space = enumerate_env_space(next, &search.ordering)?;
            let ranked = exhaustive_rank(prev, next, &space, &target, search, mode)?;
            let mut tasks = self.distribution.support.clone();
            for env in space {
                let t = self.rule.task(env);
                if !tasks.contains(&t) {
                    tasks.push(t);
                }
            }
            return Ok((tasks, Some(ranked)));
        }
        let seed = self.config.seed ^ (self.generation() as u64).wrapping_mul(0xA24B_AED4_963E_E407);
        let found = select_candidates(prev, next, &target, search, mode, seed)?;
        let mut tasks = self.distribution.support.clone();
        for c in &found.candidates {
            let t = self.rule.task(c.env.clone());
            if !tasks.contains(&t) {
                tasks.push(t);
            }
        }
        Ok((tasks, Some(found)))
    }

    /// One generation: sample and play `generation_size` episodes,
    /// re-estimate the competencies, score tasks on the old and new
    /// networks and update the distribution.
    pub fn run_generation<E, F, L>(&mut self, learner: &mut L, factory: &F) -> Result<&GenerationStats, CurriculumError>
    where
        F: EnvFactory<Env = E>,
        L: EpisodeLearner<E>,
    {
        let generation = self.generation();
        let mut played: BTreeMap<TaskDescriptor, Vec<Outcomes>> = BTreeMap::new();
        let mut failures = 0;
        for _ in 0..self.config.generation_size {
            let task = self.distribution.sample(&mut self.rng).clone();
            let seed: u64 = self.rng.gen();
            let outcomes = match factory.make(&task, seed).and_then(|mut env| learner.run_episode(&mut env)) {
                Ok(o) if task.enabled_targets.iter().all(|t| o.contains_key(t)) => {
                    task.enabled_targets.iter().map(|t| (t.clone(), o[t])).collect()
                }
                Ok(_) | Err(_) => {
                    failures += 1;
                    task.enabled_targets.iter().map(|t| (t.clone(), false)).collect()
                }
            };
            self.rollouts.push(RolloutRecord::new(generation, task.clone(), outcomes));
            played.entry(task).or_default().push(self.rollouts.last().expect("just pushed").outcomes.clone());
        }
        self.learner_failures += failures;

        let estimate = self.estimate(generation)?;
        let next_prior = EnvPrior::empirical(&self.spec, played.keys(), self.config.prior_pseudo_count);
        let prev = self.network(&self.phi, &self.env_prior)?;
        let next = self.network(&estimate.phi, &next_prior)?;

        let (tasks, candidates) = self.scored_tasks(&prev, &next)?;
        let mut scores = Vec::with_capacity(tasks.len());
        let mut predictions = BTreeMap::new();
        for t in &tasks {
            let terminal = terminal_target(&self.spec, &t.enabled_targets)?;
            let p_prev = predict_success(&prev, t, &terminal)?;
            let p_curr = predict_success(&next, t, &terminal)?;
            let f = match self.config.variant {
                Variant::Anti => anti_fitness(p_prev, p_curr, self.config.anti_formula),
                _ => fitness(p_prev, p_curr),
            };
            let per_target = t
                .enabled_targets
                .iter()
                .map(|name| Ok((name.clone(), predict_success(&next, t, name)?)))
                .collect::<Result<BTreeMap<_, _>, SpecError>>()?;
            predictions.insert(t.clone(), (f, p_prev, p_curr, per_target));
            scores.push((t.clone(), f));
        }

        let before = self.distribution.clone();
        let (after, fallback) = match self.config.variant {
            Variant::Sebn | Variant::Anti => {
                let update = if scores.len() == before.support.len() && scores.iter().all(|(t, _)| before.support.contains(t)) {
                    update_distribution(&before, &scores)?
                } else {
                    update_partial(&before, &scores)?
                };
                (update.distribution, update.fallback)
            }
            Variant::Uniform | Variant::None => {
                (TaskDistribution { generation: generation + 1, ..before.clone() }, false)
            }
        };
        after.validate()?;

        let task_stats = after
            .support
            .iter()
            .zip(&after.weights)
            .map(|(t, &w)| {
                let runs = played.get(t).map_or(&[][..], |v| v.as_slice());
                let realized = t
                    .enabled_targets
                    .iter()
                    .filter(|_| !runs.is_empty())
                    .map(|name| (name.clone(), runs.iter().filter(|o| o[name]).count() as f64 / runs.len() as f64))
                    .collect();
                let p = predictions.get(t);
                TaskStats {
                    task: t.clone(),
                    previous_weight: before.weight_of(t),
                    weight: w,
                    fitness: p.map(|p| p.0),
                    pred_prev: p.map(|p| p.1),
                    pred_curr: p.map(|p| p.2),
                    target_predictions: p.map(|p| p.3.clone()).unwrap_or_default(),
                    realized,
                    episodes: runs.len(),
                }
            })
            .collect();
        let stats = GenerationStats {
            generation,
            tasks: task_stats,
            estimate: estimate.clone(),
            fallback,
            learner_failures: failures,
            candidates,
            expected_difficulty: after.expected_difficulty(),
        };
        self.phi = estimate.phi;
        self.env_prior = next_prior;
        self.distribution = after;
        self.history.push(stats);
        Ok(self.history.last().expect("just pushed"))
    }

    /// The rollouts of one generation.
    pub fn rollouts_of(&self, generation: usize) -> impl Iterator<Item = &RolloutRecord> {
        self.rollouts.iter().filter(move |r| r.generation == generation)
    }
}

/// One row of the curriculum history CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub generation: usize,
    pub task: String,
    pub weight: f64,
    pub fitness: Option<f64>,
    pub pred_prev: Option<f64>,
    pub pred_curr: Option<f64>,
    /// Terminal-target success frequency this generation.
    pub realized: Option<f64>,
    pub episodes: usize,
}

pub fn history_rows(spec: &SebnSpec, history: &[GenerationStats]) -> Result<Vec<HistoryRow>, CurriculumError> {
    let mut rows = Vec::new();
    for g in history {
        for t in &g.tasks {
            let terminal = terminal_target(spec, &t.task.enabled_targets)?;
            rows.push(HistoryRow {
                generation: g.generation,
                task: t.task.to_string(),
                weight: t.weight,
                fitness: t.fitness,
                pred_prev: t.pred_prev,
                pred_curr: t.pred_curr,
                realized: t.realized.get(&terminal).copied(),
                episodes: t.episodes,
            });
        }
    }
    Ok(rows)
}

pub fn history_csv(spec: &SebnSpec, history: &[GenerationStats]) -> Result<String, CurriculumError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in history_rows(spec, history)? {
        w.serialize(row).map_err(|e| CurriculumError::History(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CurriculumError::History(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CurriculumError::History(e.to_string()))
}
