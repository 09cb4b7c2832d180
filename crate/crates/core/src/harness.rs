//! Experiment orchestration: run curriculum variants over several seeds,
//! evaluate the greedy policy on a fixed descriptor and write per-seed logs,
//! an aggregate report and long-format plot data.
//!
//! Layout of an output directory:
//!
//! ```text
//! <out>/report.json
//! <out>/<variant>/seed-<s>/history.csv      curriculum history
//! <out>/<variant>/seed-<s>/rollouts.jsonl   every training episode
//! <out>/<variant>/seed-<s>/candidates.jsonl ranked configurations per generation
//! <out>/<variant>/seed-<s>/eval.csv         generation,success
//! <out>/<variant>/seed-<s>/learner.json     final learner checkpoint (DoorKey)
//! ```
//!
//! `emit_plot_data` adds `plot_eval.csv` (`generation,variant,seed,metric,value`,
//! one row per checkpoint per seed) and `plot_curriculum.csv`
//! (`generation,variant,seed,task,weight`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{
    history_csv, terminal_target, AntiFormula, CurriculumConfig, CurriculumError, CurriculumState, InitMode,
    TargetRule, Variant,
};
use crate::estimator::{EmConfig, RolloutRecord};
use crate::learner::{evaluate_policy, EnvFactory, EpisodeLearner, GridFactory, LearnerError, QConfig, QLearner};
use crate::megagrid::{DISTANCE, EXISTS_DOOR, WALL};
use crate::search::SearchConfig;
use crate::sebn::{fixtures, parse_spec, SebnSpec, SpecError, TaskDescriptor};
use crate::synthetic::{SyntheticFactory, SyntheticLearner};

/// Success rate counted as solving the evaluation task.
pub const SUCCESS_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing input file {0}")]
    MissingInput(PathBuf),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

fn io_err(path: &Path, e: impl ToString) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<String, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::MissingInput(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// What plays the episodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Megagrid DoorKey with the tabular Q-learner.
    #[default]
    Doorkey,
    /// Outcomes sampled from a hidden SEBN whose skills grow with practice.
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    /// Spec file; the bundled DoorKey spec when absent.
    pub spec: Option<PathBuf>,
    pub variants: Vec<Variant>,
    pub generations: usize,
    pub generation_size: usize,
    pub seeds: Vec<u64>,
    /// Evaluate after every `eval_interval` generations and after the last.
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Feature values of the evaluation task. When absent: the wall and
    /// locked door task starting near a point of interest for DoorKey, every
    /// feature at its maximum otherwise.
    pub eval_descriptor: Option<BTreeMap<String, usize>>,
    pub grid_size: i32,
    /// Grid size of the final generalisation evaluation; skipped when absent.
    pub generalization_size: Option<i32>,
    pub output_dir: PathBuf,
    pub init: InitMode,
    pub anti_formula: AntiFormula,
    pub history_decay: Option<f64>,
    pub prior_pseudo_count: f64,
    pub em: EmConfig,
    pub search: SearchConfig,
    pub learner: QConfig,
    /// Skill gained per successful episode by the synthetic learner.
    pub synthetic_rate: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: Domain::Doorkey,
            spec: None,
            variants: vec![Variant::Sebn],
            generations: 100,
            generation_size: crate::curriculum::DEFAULT_GENERATION_SIZE,
            seeds: vec![0],
            eval_interval: 1,
            eval_episodes: 100,
            eval_descriptor: None,
            grid_size: 8,
            generalization_size: Some(32),
            output_dir: PathBuf::from("out"),
            init: InitMode::Uniform,
            anti_formula: AntiFormula::OneMinusSquare,
            history_decay: None,
            prior_pseudo_count: 1.0,
            em: EmConfig::default(),
            search: SearchConfig::default(),
            learner: QConfig::default(),
            synthetic_rate: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.generations == 0 {
            return bad("generations must be at least 1");
        }
        if self.generation_size == 0 {
            return bad("generation_size must be at least 1");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be at least 1");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.variants.is_empty() {
            return bad("variants must not be empty");
        }
        if self.grid_size < 5 || self.generalization_size.is_some_and(|g| g < 5) {
            return bad("grid sizes must be at least 5");
        }
        if self.synthetic_rate.is_nan() || self.synthetic_rate <= 0.0 {
            return bad("synthetic_rate must be positive");
        }
        self.learner.validate()?;
        Ok(())
    }

    pub fn load_spec(&self) -> Result<SebnSpec, HarnessError> {
        match &self.spec {
            Some(path) => Ok(parse_spec(&read(path)?)?),
            None => Ok(parse_spec(fixtures::DOORKEY)?),
        }
    }

    pub fn target_rule(&self, spec: &SebnSpec) -> TargetRule {
        match self.domain {
            Domain::Doorkey => TargetRule::doorkey(),
            Domain::Synthetic => TargetRule::all_targets(spec),
        }
    }

    pub fn eval_task(&self, spec: &SebnSpec) -> Result<TaskDescriptor, HarnessError> {
        let env = match &self.eval_descriptor {
            Some(env) => env.clone(),
            None => match self.domain {
                Domain::Doorkey => [(DISTANCE, 0), (WALL, 1), (EXISTS_DOOR, 1)].map(|(k, v)| (k.to_string(), v)).into(),
                Domain::Synthetic => spec.env_vars.iter().map(|v| (v.name.clone(), v.domain_size - 1)).collect(),
            },
        };
        let task = self.target_rule(spec).task(env);
        task.validate(spec)?;
        Ok(task)
    }

    fn curriculum(&self, variant: Variant, seed: u64) -> CurriculumConfig {
        CurriculumConfig {
            variant,
            generation_size: self.generation_size,
            init: self.init,
            anti_formula: self.anti_formula,
            em: self.em.clone(),
            search: self.search.clone(),
            history_decay: self.history_decay,
            prior_pseudo_count: self.prior_pseudo_count,
            seed,
        }
    }

    /// Seed of the evaluation instances; shared by all variants so that
    /// runs with the same seed are paired.
    pub fn eval_seed(seed: u64) -> u64 {
        seed ^ 0x5EED_E7A1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub generation: usize,
    pub success: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    /// First checkpoint at or above the success threshold.
    pub generations_to_threshold: Option<usize>,
    pub generalization: Option<f64>,
    pub learner_failures: usize,
    /// Set when the seed aborted; the other fields hold what was completed.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self { median: quantile(&v, 0.5), q1: quantile(&v, 0.25), q3: quantile(&v, 0.75) })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub seeds: Vec<SeedReport>,
    /// Per checkpoint generation, over the seeds that reached it.
    pub success: BTreeMap<usize, Summary>,
    /// Seeds that never reach the threshold count as one past the last
    /// generation.
    pub generations_to_threshold: Option<Summary>,
    pub generalization: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub eval_task: TaskDescriptor,
    pub variants: Vec<VariantReport>,
}

impl EvalReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantReport> {
        self.variants.iter().find(|r| r.variant == v)
    }
}

pub fn aggregate(variant: Variant, seeds: Vec<SeedReport>, generations: usize) -> VariantReport {
    let mut by_gen: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for s in &seeds {
        for c in &s.checkpoints {
            by_gen.entry(c.generation).or_default().push(c.success);
        }
    }
    let success = by_gen.iter().filter_map(|(&g, v)| Some((g, Summary::of(v)?))).collect();
    let complete: Vec<&SeedReport> = seeds.iter().filter(|s| s.error.is_none()).collect();
    let reach: Vec<f64> = complete
        .iter()
        .map(|s| s.generations_to_threshold.unwrap_or(generations + 1) as f64)
        .collect();
    let general: Vec<f64> = complete.iter().filter_map(|s| s.generalization).collect();
    VariantReport {
        variant,
        generations_to_threshold: Summary::of(&reach),
        generalization: Summary::of(&general),
        success,
        seeds,
    }
}

pub fn seed_dir(root: &Path, variant: Variant, seed: u64) -> PathBuf {
    root.join(variant.name()).join(format!("seed-{seed}"))
}

struct SeedRun<'a> {
    config: &'a ExperimentConfig,
    spec: &'a SebnSpec,
    eval_task: &'a TaskDescriptor,
    variant: Variant,
    seed: u64,
    dir: PathBuf,
}

impl SeedRun<'_> {
    fn run<F, L>(&self, learner: &mut L, factory: &F, report: &mut SeedReport) -> Result<CurriculumState, HarnessError>
    where
        F: EnvFactory,
        L: EpisodeLearner<F::Env>,
    {
        let c = self.config;
        let rule = c.target_rule(self.spec);
        let mut state = CurriculumState::new(
            self.spec.clone(),
            rule,
            self.eval_task.clone(),
            c.curriculum(self.variant, self.seed),
        )?;
        let terminal = terminal_target(self.spec, &self.eval_task.enabled_targets)?;
        let mut candidates = String::new();
        let mut eval = String::from("generation,success\n");
        let result = (|| -> Result<(), HarnessError> {
            for g in 1..=c.generations {
                let stats = state.run_generation(learner, factory)?;
                let line = serde_json::json!({ "generation": stats.generation, "candidates": stats.candidates });
                candidates.push_str(&line.to_string());
                candidates.push('\n');
                if g % c.eval_interval == 0 || g == c.generations {
                    let success = evaluate_policy(
                        learner,
                        factory,
                        self.eval_task,
                        &terminal,
                        c.eval_episodes,
                        ExperimentConfig::eval_seed(self.seed),
                    )?;
                    eval.push_str(&format!("{g},{success}\n"));
                    report.checkpoints.push(Checkpoint { generation: g, success });
                    if success >= SUCCESS_THRESHOLD && report.generations_to_threshold.is_none() {
                        report.generations_to_threshold = Some(g);
                    }
                }
            }
            Ok(())
        })();
        report.learner_failures = state.learner_failures;
        write(&self.dir.join("history.csv"), &history_csv(self.spec, &state.history)?)?;
        write(&self.dir.join("rollouts.jsonl"), &RolloutRecord::to_jsonl(&state.rollouts))?;
        write(&self.dir.join("candidates.jsonl"), &candidates)?;
        write(&self.dir.join("eval.csv"), &eval)?;
        result.map(|_| state)
    }

    fn execute(&self) -> SeedReport {
        let mut report = SeedReport {
            seed: self.seed,
            checkpoints: Vec::new(),
            generations_to_threshold: None,
            generalization: None,
            learner_failures: 0,
            error: None,
        };
        if let Err(e) = self.execute_into(&mut report) {
            log::warn!("{} seed {} aborted: {e}", self.variant, self.seed);
            report.error = Some(e.to_string());
        }
        report
    }

    fn execute_into(&self, report: &mut SeedReport) -> Result<(), HarnessError> {
        fs::create_dir_all(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        let c = self.config;
        match c.domain {
            Domain::Doorkey => {
                let factory = GridFactory::new(c.grid_size, c.grid_size);
                let mut learner = QLearner::doorkey(QConfig { seed: self.seed, ..c.learner.clone() });
                self.run(&mut learner, &factory, report)?;
                write(&self.dir.join("learner.json"), &learner.to_json())?;
                if let Some(size) = c.generalization_size {
                    let big = GridFactory::new(size, size);
                    let terminal = terminal_target(self.spec, &self.eval_task.enabled_targets)?;
                    let seed = ExperimentConfig::eval_seed(self.seed).rotate_left(1);
                    report.generalization =
                        Some(evaluate_policy(&mut learner, &big, self.eval_task, &terminal, c.eval_episodes, seed)?);
                }
            }
            Domain::Synthetic => {
                let factory = SyntheticFactory { spec: self.spec.clone() };
                let mut learner = SyntheticLearner::new(self.spec.clone(), c.synthetic_rate, self.seed);
                self.run(&mut learner, &factory, report)?;
            }
        }
        Ok(())
    }
}

/// Runs every (variant, seed) pair in parallel and writes the report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvalReport, HarnessError> {
    config.validate()?;
    let spec = config.load_spec()?;
    spec.validate()?;
    let eval_task = config.eval_task(&spec)?;
    config.target_rule(&spec).validate(&spec)?;
    let root = &config.output_dir;
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    let jobs: Vec<(Variant, u64)> =
        config.variants.iter().flat_map(|&v| config.seeds.iter().map(move |&s| (v, s))).collect();
    let results: Vec<(Variant, SeedReport)> = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let run = SeedRun {
                config,
                spec: &spec,
                eval_task: &eval_task,
                variant,
                seed,
                dir: seed_dir(root, variant, seed),
            };
            (variant, run.execute())
        })
        .collect();
    let variants = config
        .variants
        .iter()
        .map(|&v| {
            let seeds = results.iter().filter(|(rv, _)| *rv == v).map(|(_, r)| r.clone()).collect();
            aggregate(v, seeds, config.generations)
        })
        .collect();
    let report = EvalReport { config: config.clone(), eval_task, variants };
    let text = serde_json::to_string_pretty(&report).expect("report serialises");
    write(&root.join("report.json"), &text)?;
    Ok(report)
}

fn runs_in(root: &Path) -> Result<Vec<(Variant, u64, PathBuf)>, HarnessError> {
    let mut runs = Vec::new();
    for v in Variant::ALL {
        let vdir = root.join(v.name());
        let Ok(entries) = fs::read_dir(&vdir) else { continue };
        for entry in entries {
            let entry = entry.map_err(|e| io_err(&vdir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(seed) = name.strip_prefix("seed-").and_then(|s| s.parse().ok()) {
                runs.push((v, seed, entry.path()));
            }
        }
    }
    runs.sort_by_key(|(v, s, _)| (*v, *s));
    Ok(runs)
}

/// Writes `plot_eval.csv` and `plot_curriculum.csv` into `run_dir` and
/// returns their paths.
pub fn emit_plot_data(run_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let runs = runs_in(run_dir)?;
    if runs.is_empty() {
        return Err(HarnessError::MissingInput(run_dir.join("<variant>/seed-<s>")));
    }
    let mut eval = csv::Writer::from_writer(Vec::new());
    let mut curriculum = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| io_err(run_dir, e);
    eval.write_record(["generation", "variant", "seed", "metric", "value"]).map_err(csv_err)?;
    curriculum.write_record(["generation", "variant", "seed", "task", "weight"]).map_err(csv_err)?;
    for (variant, seed, dir) in &runs {
        let eval_path = dir.join("eval.csv");
        let text = read(&eval_path)?;
        let mut rows = csv::Reader::from_reader(text.as_bytes());
        for rec in rows.deserialize::<Checkpoint>() {
            let c = rec.map_err(|e| io_err(&eval_path, e))?;
            eval.serialize((c.generation, variant.name(), seed, "eval_success", c.success)).map_err(csv_err)?;
        }
        let history_path = dir.join("history.csv");
        let text = read(&history_path)?;
        let mut rows = csv::Reader::from_reader(text.as_bytes());
        for rec in rows.deserialize::<crate::curriculum::HistoryRow>() {
            let h = rec.map_err(|e| io_err(&history_path, e))?;
            curriculum.serialize((h.generation, variant.name(), seed, h.task, h.weight)).map_err(csv_err)?;
        }
    }
    let mut written = Vec::new();
    for (name, w) in [("plot_eval.csv", eval), ("plot_curriculum.csv", curriculum)] {
        let path = run_dir.join(name);
        let bytes = w.into_inner().map_err(|e| io_err(&path, e))?;
        write(&path, &String::from_utf8(bytes).expect("csv is utf-8"))?;
        written.push(path);
    }
    Ok(written)
}

/// Greedy success of a saved DoorKey learner on fresh instances.
pub fn evaluate_checkpoint(
    learner_json: &str,
    descriptor: &TaskDescriptor,
    spec: &SebnSpec,
    episodes: usize,
    grid_size: i32,
    seed: u64,
) -> Result<f64, HarnessError> {
    let mut learner = QLearner::from_json(learner_json)?;
    let terminal = terminal_target(spec, &descriptor.enabled_targets)?;
    Ok(evaluate_policy(&mut learner, &GridFactory::new(grid_size, grid_size), descriptor, &terminal, episodes, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            generations: 2,
            generation_size: 4,
            eval_episodes: 3,
            generalization_size: None,
            output_dir: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::default();
        ok.validate().unwrap();
        for bad in [
            ExperimentConfig { generations: 0, ..ok.clone() },
            ExperimentConfig { eval_episodes: 0, ..ok.clone() },
            ExperimentConfig { seeds: vec![], ..ok.clone() },
            ExperimentConfig { variants: vec![], ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
        let back = ExperimentConfig::from_toml(&ok.to_toml()).unwrap();
        assert_eq!(back, ok);
        assert!(ExperimentConfig::from_toml("generations = 0").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn quantiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        let e = Summary::of(&[1.0, 2.0]).unwrap();
        assert_eq!((e.q1, e.median, e.q3), (1.25, 1.5, 1.75));
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn default_eval_task_is_hardest() {
        let cfg = ExperimentConfig::default();
        let spec = cfg.load_spec().unwrap();
        let t = cfg.eval_task(&spec).unwrap();
        assert_eq!(t.env[DISTANCE], 0);
        assert_eq!(t.difficulty(), 2);
        assert_eq!(t.enabled_targets.len(), 3);
    }

    #[test]
    fn uniform_single_rollout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { variants: vec![Variant::Uniform], generations: 1, generation_size: 1, ..small(dir.path()) };
        let report = run_experiment(&cfg).unwrap();
        let seed = &report.variants[0].seeds[0];
        assert!(seed.error.is_none(), "{seed:?}");
        let d = seed_dir(dir.path(), Variant::Uniform, 0);
        let rollouts = RolloutRecord::from_jsonl(&fs::read_to_string(d.join("rollouts.jsonl")).unwrap()).unwrap();
        assert_eq!(rollouts.len(), 1);
        let history = fs::read_to_string(d.join("history.csv")).unwrap();
        assert!(history.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0.125")));
    }

    #[test]
    fn plot_data_has_one_row_per_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_plot_data(dir.path()), Err(HarnessError::MissingInput(_))));
        let cfg = ExperimentConfig { variants: Variant::ALL.to_vec(), seeds: vec![0, 1], ..small(dir.path()) };
        let report = run_experiment(&cfg).unwrap();
        assert!(report.variants.iter().flat_map(|v| &v.seeds).all(|s| s.error.is_none()));
        let files = emit_plot_data(dir.path()).unwrap();
        let eval = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(eval.lines().count() - 1, 4 * 2 * 2);
        fs::remove_file(seed_dir(dir.path(), Variant::Anti, 1).join("eval.csv")).unwrap();
        match emit_plot_data(dir.path()) {
            Err(HarnessError::MissingInput(p)) => assert!(p.ends_with("anti/seed-1/eval.csv")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthetic_domain_runs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            domain: Domain::Synthetic,
            spec: Some(PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../specs/robosuite.spec"))),
            ..small(dir.path())
        };
        let report = run_experiment(&cfg).unwrap();
        assert!(report.variants[0].seeds[0].error.is_none());
        assert_eq!(report.eval_task.difficulty(), 7);
    }

    #[test]
    fn bad_eval_descriptor_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let env = BTreeMap::from([("distance".to_string(), 0)]);
        let cfg = ExperimentConfig { eval_descriptor: Some(env), ..small(dir.path()) };
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn failed_seed_is_recorded_and_others_continue() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("sebn")).unwrap();
        fs::write(seed_dir(dir.path(), Variant::Sebn, 1), "not a directory").unwrap();
        let cfg = ExperimentConfig { seeds: vec![0, 1], ..small(dir.path()) };
        let report = run_experiment(&cfg).unwrap();
        let seeds = &report.variants[0].seeds;
        assert!(seeds[0].error.is_none());
        assert!(seeds[1].error.is_some());
        let expected = seeds[0].generations_to_threshold.unwrap_or(cfg.generations + 1) as f64;
        assert_eq!(report.variants[0].generations_to_threshold.as_ref().unwrap().median, expected);
    }
}
