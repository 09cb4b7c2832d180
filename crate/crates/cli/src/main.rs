//! `sebn`: query skill-environment networks, estimate competencies from
//! rollout logs, rank candidate tasks and run curriculum experiments.

use std::collections::BTreeMap;
use std::error::Error;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sebn::curriculum::{terminal_target, TargetRule, Variant};
use sebn::estimator::{estimate_phi, EmConfig, PhiEstimate, RolloutRecord};
use sebn::harness::{emit_plot_data, evaluate_checkpoint, run_experiment, ExperimentConfig};
use sebn::search::{enumerate_env_space, exhaustive_rank, select_candidates, SearchConfig, SearchMode};
use sebn::sebn::{assemble_sebn, fixtures, parse_spec, Phi, SebnSpec};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "sebn", version, about = "SEBN-guided curriculum tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Marginals of network variables given environment features.
    Infer {
        #[command(flatten)]
        model: Model,
        /// Environment feature as `name=value`; repeatable.
        #[arg(long = "env", value_parser = parse_pair)]
        env: Vec<(String, usize)>,
        /// Variable to report; every target when omitted.
        #[arg(long)]
        query: Vec<String>,
        /// Use weighted mini-bucket inference with this ibound.
        #[arg(long)]
        ibound: Option<usize>,
    },
    /// Maximum-likelihood competencies from a JSON-lines rollout log.
    Estimate {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        rollouts: PathBuf,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Environment configurations whose predicted success moved the most
    /// between two competency estimates.
    Candidates {
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Previous competencies; the spec's base values when omitted.
        #[arg(long)]
        prev: Option<PathBuf>,
        #[arg(long)]
        next: PathBuf,
        /// Target to score; the terminal target when omitted.
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        expansions: usize,
        #[arg(long, default_value_t = 20)]
        ibound: usize,
        #[arg(long, value_enum, default_value_t = Mode::Max)]
        mode: Mode,
        /// Rank every configuration instead of searching.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full curriculum experiment; flags override the config file.
    Run {
        /// TOML experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        variant: Vec<String>,
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        generation_size: Option<usize>,
        #[arg(long)]
        eval_interval: Option<usize>,
        #[arg(long)]
        eval_episodes: Option<usize>,
        #[arg(long)]
        grid_size: Option<i32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy success of a saved DoorKey learner.
    Eval {
        #[arg(long)]
        learner: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long = "env", value_parser = parse_pair)]
        env: Vec<(String, usize)>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 8)]
        grid_size: i32,
        #[arg(long)]
        seed: u64,
    },
    /// Long-format CSVs for plotting from a run directory.
    PlotData { dir: PathBuf },
}

#[derive(clap::Args)]
struct Model {
    /// Spec file; the bundled DoorKey spec when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Competencies as JSON (a map or an `estimate` result).
    #[arg(long)]
    phi: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Max,
    Min,
}

fn parse_pair(s: &str) -> std::result::Result<(String, usize), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v = v.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_spec(path: Option<&Path>) -> Result<SebnSpec> {
    Ok(match path {
        Some(p) => parse_spec(&read(p)?)?,
        None => parse_spec(fixtures::DOORKEY)?,
    })
}

fn load_phi(path: &Path) -> Result<Phi> {
    let text = read(path)?;
    if let Ok(phi) = serde_json::from_str::<Phi>(&text) {
        return Ok(phi);
    }
    let est: PhiEstimate = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(est.phi)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn infer(model: Model, env: Vec<(String, usize)>, query: Vec<String>, ibound: Option<usize>) -> Result<()> {
    let mut spec = load_spec(model.spec.as_deref())?;
    if let Some(p) = &model.phi {
        spec = spec.with_phi(&load_phi(p)?)?;
    }
    let network = assemble_sebn(&spec, None)?;
    let evidence = network.evidence(env.iter().map(|(k, v)| (k.as_str(), *v)))?;
    let names = if query.is_empty() { spec.target_vars.clone() } else { query };
    let mut out = BTreeMap::new();
    for name in names {
        let id = network.require_id(&name)?;
        let m = match ibound {
            Some(i) => network.wmb_query(&evidence, &[id], i)?,
            None => network.query_marginal(&evidence, &[id])?,
        };
        out.insert(name, m.values().to_vec());
    }
    print_json(&out)
}

#[allow(clippy::too_many_arguments)]
fn candidates(
    spec: Option<PathBuf>,
    prev: Option<PathBuf>,
    next: PathBuf,
    target: Option<String>,
    search: SearchConfig,
    mode: Mode,
    exhaustive: bool,
    seed: u64,
) -> Result<()> {
    let spec = load_spec(spec.as_deref())?;
    let prev_phi = match prev {
        Some(p) => load_phi(&p)?,
        None => spec.phi_base.clone(),
    };
    let prev_net = assemble_sebn(&spec.with_phi(&prev_phi)?, None)?;
    let next_net = assemble_sebn(&spec.with_phi(&load_phi(&next)?)?, None)?;
    let target = match target {
        Some(t) => t,
        None => terminal_target(&spec, &TargetRule::all_targets(&spec).always.iter().cloned().collect())?,
    };
    let mode = match mode {
        Mode::Max => SearchMode::Max,
        Mode::Min => SearchMode::Min,
    };
    let found = if exhaustive {
        let space = enumerate_env_space(&next_net, &search.ordering)?;
        exhaustive_rank(&prev_net, &next_net, &space, &target, &search, mode)?
    } else {
        select_candidates(&prev_net, &next_net, &target, &search, mode, seed)?
    };
    print_json(&found)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Infer { model, env, query, ibound } => infer(model, env, query, ibound),
        Command::Estimate { spec, rollouts, restarts, max_iterations, seed } => {
            let spec = load_spec(spec.as_deref())?;
            let data = RolloutRecord::from_jsonl(&read(&rollouts)?)?;
            let config = EmConfig { restarts, max_iterations, seed, ..EmConfig::default() };
            print_json(&estimate_phi(&spec, &data, &config)?)
        }
        Command::Candidates { spec, prev, next, target, n, expansions, ibound, mode, exhaustive, seed } => {
            let search = SearchConfig { n, expansions, ibound, ..SearchConfig::default() };
            candidates(spec, prev, next, target, search, mode, exhaustive, seed)
        }
        Command::Run { config, variant, seed, generations, generation_size, eval_interval, eval_episodes, grid_size, out } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::from_toml(&read(p)?)?,
                None => ExperimentConfig::default(),
            };
            if !variant.is_empty() {
                cfg.variants = variant.iter().map(|v| v.parse::<Variant>()).collect::<std::result::Result<_, _>>()?;
            }
            if !seed.is_empty() {
                cfg.seeds = seed;
            }
            cfg.generations = generations.unwrap_or(cfg.generations);
            cfg.generation_size = generation_size.unwrap_or(cfg.generation_size);
            cfg.eval_interval = eval_interval.unwrap_or(cfg.eval_interval);
            cfg.eval_episodes = eval_episodes.unwrap_or(cfg.eval_episodes);
            cfg.grid_size = grid_size.unwrap_or(cfg.grid_size);
            cfg.output_dir = out.unwrap_or(cfg.output_dir);
            let report = run_experiment(&cfg)?;
            println!("eval task: {}", report.eval_task);
            for v in &report.variants {
                for s in &v.seeds {
                    let last = s.checkpoints.last().map_or(f64::NAN, |c| c.success);
                    let reach = s.generations_to_threshold.map_or("-".to_string(), |g| g.to_string());
                    let general = s.generalization.map_or("-".to_string(), |g| format!("{g:.2}"));
                    let status = s.error.as_deref().unwrap_or("ok");
                    println!(
                        "{:<8} seed {:<4} final {last:.2}  gens-to-80% {reach:<5} generalization {general:<5} {status}",
                        v.variant, s.seed
                    );
                }
            }
            println!("report: {}", cfg.output_dir.join("report.json").display());
            Ok(())
        }
        Command::Eval { learner, spec, env, episodes, grid_size, seed } => {
            let spec = load_spec(spec.as_deref())?;
            let env = if env.is_empty() {
                ExperimentConfig::default().eval_task(&spec)?.env
            } else {
                env.into_iter().collect()
            };
            let task = TargetRule::doorkey().task(env);
            task.validate(&spec)?;
            let rate = evaluate_checkpoint(&read(&learner)?, &task, &spec, episodes, grid_size, seed)?;
            println!("{rate}");
            Ok(())
        }
        Command::PlotData { dir } => {
            for path in emit_plot_data(&dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
