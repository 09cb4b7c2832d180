//! Learner contract used by the curriculum loop, and a tabular Q-learning
//! reference learner with one value table per option.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::megagrid::{
    bfs_plan, generate_env_with, Action, Direction, GridError, GridTask, Item, Observation, OptionTarget, SensorConfig,
};
use crate::sebn::{Outcomes, TaskDescriptor};

pub const CHECKPOINT_VERSION: u32 = 1;

const ACTIONS: usize = Action::ALL.len();

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("unknown option `{0}`")]
    UnknownOption(String),
    #[error("non-finite value in update: {0}")]
    NonFinite(String),
    #[error("environment: {0}")]
    Env(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl From<GridError> for LearnerError {
    fn from(e: GridError) -> Self {
        LearnerError::Env(e.to_string())
    }
}

/// Builds environment instances from task descriptors.
pub trait EnvFactory {
    type Env;
    fn make(&self, task: &TaskDescriptor, seed: u64) -> Result<Self::Env, LearnerError>;
}

/// What the curriculum needs from a learner: play an episode and report
/// which enabled targets succeeded. Nothing else about the learner is
/// visible to the caller.
pub trait EpisodeLearner<E> {
    /// Plays one episode while learning from it.
    fn run_episode(&mut self, env: &mut E) -> Result<Outcomes, LearnerError>;
    /// Plays one episode greedily without learning.
    fn evaluate_episode(&mut self, env: &mut E) -> Result<Outcomes, LearnerError>;
}

/// Environments that know which task they instantiate.
pub trait HasTask {
    fn task(&self) -> &TaskDescriptor;
}

impl HasTask for GridTask {
    fn task(&self) -> &TaskDescriptor {
        &self.descriptor
    }
}

/// Reports the same outcome for every enabled target without acting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScriptedLearner {
    pub succeed: bool,
}

impl<E: HasTask> EpisodeLearner<E> for ScriptedLearner {
    fn run_episode(&mut self, env: &mut E) -> Result<Outcomes, LearnerError> {
        Ok(env.task().enabled_targets.iter().map(|t| (t.clone(), self.succeed)).collect())
    }

    fn evaluate_episode(&mut self, env: &mut E) -> Result<Outcomes, LearnerError> {
        self.run_episode(env)
    }
}

/// Plays DoorKey optimally by following the breadth-first plan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PlannerLearner;

impl EpisodeLearner<GridTask> for PlannerLearner {
    fn run_episode(&mut self, env: &mut GridTask) -> Result<Outcomes, LearnerError> {
        let plan = bfs_plan(env).ok_or_else(|| LearnerError::Env("task has no plan".into()))?;
        for a in plan {
            env.step(a)?;
        }
        Ok(env.outcomes())
    }

    fn evaluate_episode(&mut self, env: &mut GridTask) -> Result<Outcomes, LearnerError> {
        self.run_episode(env)
    }
}

/// Generates DoorKey grids of a fixed size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFactory {
    pub width: i32,
    pub height: i32,
    #[serde(default)]
    pub sensor: SensorConfig,
}

impl GridFactory {
    pub fn new(width: i32, height: i32) -> Self {
        Self { width, height, sensor: SensorConfig::default() }
    }
}

impl EnvFactory for GridFactory {
    type Env = GridTask;
    fn make(&self, task: &TaskDescriptor, seed: u64) -> Result<GridTask, LearnerError> {
        Ok(generate_env_with(task, self.width, self.height, seed, self.sensor.clone())?)
    }
}

/// Fraction of `episodes` fresh instances of `descriptor` on which the
/// greedy policy achieves `terminal`.
pub fn evaluate_policy<F, L>(
    learner: &mut L,
    factory: &F,
    descriptor: &TaskDescriptor,
    terminal: &str,
    episodes: usize,
    seed: u64,
) -> Result<f64, LearnerError>
where
    F: EnvFactory,
    L: EpisodeLearner<F::Env>,
{
    if episodes == 0 {
        return Err(LearnerError::Env("episodes must be at least 1".into()));
    }
    let mut wins = 0;
    for i in 0..episodes as u64 {
        let mut env = factory.make(descriptor, seed.wrapping_mul(1_000_003).wrapping_add(i))?;
        if learner.evaluate_episode(&mut env)?.get(terminal).copied().unwrap_or(false) {
            wins += 1;
        }
    }
    Ok(wins as f64 / episodes as f64)
}

/// Sensor observation reduced to a table key: for each item type whether
/// it lies ahead or behind, whether it lies left or right, and a coarse
/// distance bucket, plus the carrying, door and bump flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DiscreteState(pub u64);

/// Distances beyond this share one bucket.
pub const FAR_BUCKET: u64 = 3;

const ITEM_CODES: u64 = 3 * 3 * (FAR_BUCKET + 1);

/// One item's reading relative to the agent's facing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ItemReading {
    /// 0 none, 1 ahead, 2 behind.
    pub longitudinal: u8,
    /// 0 none, 1 left, 2 right.
    pub lateral: u8,
    /// 0 when unseen, otherwise the step distance capped at [`FAR_BUCKET`].
    pub bucket: u8,
}

/// Item types each DoorKey option attends to, most important first. The
/// option sees only the first of them that is currently visible.
pub fn option_focus(option: &str) -> &'static [Item] {
    match OptionTarget::from_name(option) {
        Some(OptionTarget::HasKey) => &[Item::Key],
        Some(OptionTarget::DoorOpened) => &[Item::Door],
        Some(OptionTarget::GoalReached) => &[Item::Goal, Item::Door],
        None => &Item::ALL,
    }
}

impl DiscreteState {
    pub fn from_observation(obs: &Observation) -> Self {
        Self::masked(obs, &Item::ALL)
    }

    /// The state an option with the given focus list sees: only the first
    /// visible item of `focus` is kept.
    pub fn focused(obs: &Observation, focus: &[Item]) -> Self {
        let seen = focus.iter().find(|&&item| Direction::ALL.iter().any(|&d| obs.get(item, d) > 0.0));
        Self::masked(obs, seen.map(std::slice::from_ref).unwrap_or(&[]))
    }

    /// Like [`DiscreteState::from_observation`] with every item outside
    /// `items` reported as unseen.
    pub fn masked(obs: &Observation, items: &[Item]) -> Self {
        let mut key = 0u64;
        for item in Item::ALL {
            key *= ITEM_CODES;
            if !items.contains(&item) {
                continue;
            }
            let axis = |first: Direction, second: Direction| {
                let (a, b) = (obs.relative(item, first), obs.relative(item, second));
                if a == 0.0 && b == 0.0 {
                    0
                } else if a >= b {
                    1
                } else {
                    2
                }
            };
            let lon = axis(Direction::Up, Direction::Down);
            let lat = axis(Direction::Left, Direction::Right);
            let strongest = Direction::ALL.into_iter().map(|d| obs.relative(item, d)).fold(0.0, f64::max);
            let bucket = if strongest > 0.0 { (((1.0 - strongest) * 8.0).round() as u64).clamp(1, FAR_BUCKET) } else { 0 };
            key += (lon * 3 + lat) * (FAR_BUCKET + 1) + bucket;
        }
        key = key * 2 + obs.carrying_key as u64;
        key = key * 2 + obs.door_open as u64;
        key = key * 2 + obs.front_blocked as u64;
        DiscreteState(key)
    }

    /// Per item readings, then the carrying, door-open and bump flags.
    pub fn decode(self) -> ([ItemReading; 4], bool, bool, bool) {
        let mut k = self.0;
        let blocked = k % 2 == 1;
        k /= 2;
        let door_open = k % 2 == 1;
        k /= 2;
        let carrying = k % 2 == 1;
        k /= 2;
        let mut items = [ItemReading { longitudinal: 0, lateral: 0, bucket: 0 }; 4];
        for slot in items.iter_mut().rev() {
            let v = k % ITEM_CODES;
            k /= ITEM_CODES;
            let dirs = v / (FAR_BUCKET + 1);
            *slot = ItemReading { longitudinal: (dirs / 3) as u8, lateral: (dirs % 3) as u8, bucket: (v % (FAR_BUCKET + 1)) as u8 };
        }
        (items, carrying, door_open, blocked)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which exploration decays linearly.
    pub epsilon_decay_episodes: u64,
    /// Exploration rate used when not learning; 0 is purely greedy.
    pub eval_epsilon: f64,
    pub seed: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self { alpha: 0.1, gamma: 0.95, epsilon_start: 1.0, epsilon_end: 0.05, epsilon_decay_episodes: 2000, eval_epsilon: 0.0, seed: 0 }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let ok = self.alpha > 0.0
            && self.alpha <= 1.0
            && self.gamma > 0.0
            && self.gamma <= 1.0
            && (0.0..=1.0).contains(&self.epsilon_start)
            && (0.0..=1.0).contains(&self.epsilon_end)
            && (0.0..=1.0).contains(&self.eval_epsilon);
        if ok {
            Ok(())
        } else {
            Err(LearnerError::Checkpoint(format!("invalid learner settings {self:?}")))
        }
    }
}

type Table = BTreeMap<DiscreteState, [f64; ACTIONS]>;

/// Tabular Q-learning, one table per option.
#[derive(Clone, Debug)]
pub struct QLearner {
    pub config: QConfig,
    tables: BTreeMap<String, Table>,
    episodes: u64,
    option_episodes: BTreeMap<String, u64>,
    rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    config: QConfig,
    episodes: u64,
    option_episodes: BTreeMap<String, u64>,
    tables: BTreeMap<String, Vec<(u64, [f64; ACTIONS])>>,
}

fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ episode.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl QLearner {
    pub fn new(options: &[&str], config: QConfig) -> Self {
        let rng = episode_rng(config.seed, 0);
        Self {
            tables: options.iter().map(|o| (o.to_string(), Table::new())).collect(),
            config,
            episodes: 0,
            option_episodes: options.iter().map(|o| (o.to_string(), 0)).collect(),
            rng,
        }
    }

    /// A learner with one table per DoorKey option.
    pub fn doorkey(config: QConfig) -> Self {
        Self::new(&OptionTarget::ORDER.map(|o| o.name()), config)
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Exploration rate of `option`, decayed over the episodes in which that
    /// option was active.
    pub fn epsilon(&self, option: &str) -> f64 {
        let c = &self.config;
        if c.epsilon_decay_episodes == 0 {
            return c.epsilon_end;
        }
        let seen = self.option_episodes.get(option).copied().unwrap_or(0);
        let frac = (seen as f64 / c.epsilon_decay_episodes as f64).min(1.0);
        (1.0 - frac) * c.epsilon_start + frac * c.epsilon_end
    }

    pub fn q_values(&self, option: &str, state: DiscreteState) -> Result<[f64; ACTIONS], LearnerError> {
        let table = self.tables.get(option).ok_or_else(|| LearnerError::UnknownOption(option.into()))?;
        Ok(table.get(&state).copied().unwrap_or([0.0; ACTIONS]))
    }

    pub fn table_len(&self, option: &str) -> usize {
        self.tables.get(option).map_or(0, |t| t.len())
    }

    fn greedy(&mut self, values: &[f64; ACTIONS]) -> usize {
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let best: Vec<usize> = (0..ACTIONS).filter(|&a| values[a] == top).collect();
        best[self.rng.gen_range(0..best.len())]
    }

    /// Epsilon-greedy with the training schedule when `explore`, otherwise
    /// with `eval_epsilon`; ties are broken at random.
    pub fn act(&mut self, obs: &Observation, option: &str, explore: bool) -> Result<Action, LearnerError> {
        let values = self.q_values(option, DiscreteState::focused(obs, option_focus(option)))?;
        let eps = if explore { self.epsilon(option) } else { self.config.eval_epsilon };
        let a = if self.rng.gen::<f64>() < eps {
            self.rng.gen_range(0..ACTIONS)
        } else {
            self.greedy(&values)
        };
        Ok(Action::ALL[a])
    }

    /// One-step temporal-difference backup on the option's table.
    pub fn update(
        &mut self,
        obs: &Observation,
        action: Action,
        reward: f64,
        next_obs: &Observation,
        terminal: bool,
        option: &str,
    ) -> Result<(), LearnerError> {
        if !reward.is_finite() {
            return Err(LearnerError::NonFinite(format!("reward {reward}")));
        }
        let focus = option_focus(option);
        let s = DiscreteState::focused(obs, focus);
        let s2 = DiscreteState::focused(next_obs, focus);
        let (alpha, gamma) = (self.config.alpha, self.config.gamma);
        let table = self.tables.get_mut(option).ok_or_else(|| LearnerError::UnknownOption(option.into()))?;
        let bootstrap = if terminal {
            0.0
        } else {
            table.get(&s2).map_or(0.0, |v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        };
        let row = table.entry(s).or_insert([0.0; ACTIONS]);
        let q = &mut row[action.index()];
        let updated = *q + alpha * (reward + gamma * bootstrap - *q);
        if !updated.is_finite() {
            return Err(LearnerError::NonFinite(format!("Q update to {updated}")));
        }
        *q = updated;
        Ok(())
    }

    /// Runs the options in order. When learning, the episode's one-step
    /// backups are applied at the end in reverse order so that a reward
    /// reaches every earlier step of the episode at once.
    fn play(&mut self, task: &mut GridTask, learn: bool) -> Result<Outcomes, LearnerError> {
        self.rng = episode_rng(self.config.seed ^ task.seed.rotate_left(32), self.episodes);
        let options = task.option_sequence();
        let mut obs = task.observe();
        let mut active = Vec::new();
        let mut trace = Vec::new();
        while !task.terminated {
            let Some(option) = options.iter().find(|o| !task.achieved.contains(o.name())) else { break };
            let name = option.name();
            if active.last() != Some(&name) {
                active.push(name);
            }
            let action = self.act(&obs, name, learn)?;
            let result = task.step(action)?;
            if learn {
                let done = result.option_events.contains(name);
                let reward = if done { 1.0 } else { 0.0 };
                let terminal = done || (task.terminated && task.state.agent == task.layout.goal);
                trace.push((obs, action, reward, result.observation.clone(), terminal, name));
            }
            obs = result.observation;
        }
        if learn {
            for (o, a, r, next, terminal, name) in trace.into_iter().rev() {
                self.update(&o, a, r, &next, terminal, name)?;
            }
            self.episodes += 1;
            for name in active {
                *self.option_episodes.entry(name.to_string()).or_insert(0) += 1;
            }
        }
        Ok(task.outcomes())
    }

    pub fn to_json(&self) -> String {
        let cp = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            episodes: self.episodes,
            option_episodes: self.option_episodes.clone(),
            tables: self
                .tables
                .iter()
                .map(|(k, t)| (k.clone(), t.iter().map(|(s, v)| (s.0, *v)).collect()))
                .collect(),
        };
        serde_json::to_string(&cp).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnerError> {
        let cp: Checkpoint = serde_json::from_str(text).map_err(|e| LearnerError::Checkpoint(e.to_string()))?;
        if cp.format_version != CHECKPOINT_VERSION {
            return Err(LearnerError::Checkpoint(format!("unsupported version {}", cp.format_version)));
        }
        cp.config.validate()?;
        let tables = cp
            .tables
            .into_iter()
            .map(|(k, rows)| (k, rows.into_iter().map(|(s, v)| (DiscreteState(s), v)).collect()))
            .collect();
        let rng = episode_rng(cp.config.seed, cp.episodes);
        Ok(Self { config: cp.config, tables, episodes: cp.episodes, option_episodes: cp.option_episodes, rng })
    }
}

impl PartialEq for QLearner {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.episodes == other.episodes
            && self.option_episodes == other.option_episodes
            && self.tables == other.tables
    }
}

impl EpisodeLearner<GridTask> for QLearner {
    fn run_episode(&mut self, env: &mut GridTask) -> Result<Outcomes, LearnerError> {
        self.play(env, true)
    }

    fn evaluate_episode(&mut self, env: &mut GridTask) -> Result<Outcomes, LearnerError> {
        self.play(env, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::megagrid::{DISTANCE, EXISTS_DOOR, GOAL_REACHED, HAS_KEY, WALL};

    fn blank_obs() -> Observation {
        Observation {
            intensities: [[0.0; 4]; 4],
            facing: Direction::Up,
            carrying_key: false,
            door_open: false,
            front_blocked: false,
        }
    }

    #[test]
    fn ties_are_broken_at_random_and_greedy_wins_otherwise() {
        let mut l = QLearner::doorkey(QConfig { eval_epsilon: 0.0, ..Default::default() });
        let picks: std::collections::BTreeSet<Action> =
            (0..200).map(|_| l.act(&blank_obs(), GOAL_REACHED, false).unwrap()).collect();
        assert_eq!(picks.len(), ACTIONS);
        l.update(&blank_obs(), Action::Toggle, 1.0, &blank_obs(), true, GOAL_REACHED).unwrap();
        assert!((0..50).all(|_| l.act(&blank_obs(), GOAL_REACHED, false).unwrap() == Action::Toggle));
        assert!(l.act(&blank_obs(), "fly", false).is_err());
    }

    #[test]
    fn terminal_backup() {
        let mut l = QLearner::doorkey(QConfig { alpha: 0.5, ..Default::default() });
        let o = blank_obs();
        l.update(&o, Action::TurnLeft, 1.0, &o, true, GOAL_REACHED).unwrap();
        let s = DiscreteState::from_observation(&o);
        assert_eq!(l.q_values(GOAL_REACHED, s).unwrap()[Action::TurnLeft.index()], 0.5);
        l.update(&o, Action::Forward, 0.0, &o, false, GOAL_REACHED).unwrap();
        assert_eq!(l.q_values(GOAL_REACHED, s).unwrap()[Action::Forward.index()], 0.5 * 0.95 * 0.5);
        assert!(l.update(&o, Action::Forward, f64::NAN, &o, false, GOAL_REACHED).is_err());
    }

    #[test]
    fn state_key_round_trip() {
        let mut o = blank_obs();
        o.intensities[Item::Goal as usize][Direction::Left.index()] = 0.5;
        o.intensities[Item::Wall as usize][Direction::Up.index()] = 0.875;
        o.facing = Direction::Right;
        o.carrying_key = true;
        o.front_blocked = true;
        let (items, carrying, open, blocked) = DiscreteState::from_observation(&o).decode();
        // Facing right: up is to the left, left is behind.
        assert_eq!(items[Item::Wall as usize], ItemReading { longitudinal: 0, lateral: 1, bucket: 1 });
        assert_eq!(items[Item::Goal as usize], ItemReading { longitudinal: 2, lateral: 0, bucket: FAR_BUCKET as u8 });
        assert_eq!(items[Item::Key as usize], ItemReading { longitudinal: 0, lateral: 0, bucket: 0 });
        assert!(carrying && !open && blocked);
    }

    #[test]
    fn epsilon_schedule() {
        let mut l = QLearner::doorkey(QConfig { epsilon_decay_episodes: 10, ..Default::default() });
        assert_eq!(l.epsilon(GOAL_REACHED), 1.0);
        l.option_episodes.insert(GOAL_REACHED.into(), 5);
        assert!((l.epsilon(GOAL_REACHED) - 0.525).abs() < 1e-12);
        l.option_episodes.insert(GOAL_REACHED.into(), 50);
        assert_eq!(l.epsilon(GOAL_REACHED), 0.05);
        assert_eq!(l.epsilon(HAS_KEY), 1.0);
    }

    #[test]
    fn checkpoint_round_trip_and_determinism() {
        let d = TaskDescriptor::new([(DISTANCE, 0), (WALL, 0), (EXISTS_DOOR, 0)], [GOAL_REACHED]);
        let factory = GridFactory::new(6, 6);
        let train = || {
            let mut l = QLearner::doorkey(QConfig { seed: 9, ..Default::default() });
            for i in 0..30 {
                let mut env = factory.make(&d, i).unwrap();
                l.run_episode(&mut env).unwrap();
            }
            l
        };
        let a = train();
        assert_eq!(a, train());
        assert!(a.table_len(GOAL_REACHED) > 0);
        let back = QLearner::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        assert!(QLearner::from_json("{}").is_err());
    }
}
