//! DoorKey gridworld driven by task descriptors.
//!
//! The grid has no border wall cells; moving off the edge is simply
//! blocked. The agent sees four sensors per item type (key, door, wall,
//! goal), one per cardinal direction, each reporting `max(0, 1 - d/8)` for
//! the nearest visible item in that direction's half-plane, where `d` is the
//! step (Manhattan) distance. A diagonal item lights two sensors.

mod generate;
mod planner;
mod render;

pub use generate::{generate_env, generate_env_with};
pub use planner::{bfs_plan, solvable};
pub use render::{render, replay, ReplayRecord};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sebn::TaskDescriptor;

pub const DISTANCE: &str = "distance";
pub const WALL: &str = "wall";
pub const EXISTS_DOOR: &str = "exists_door";
pub const HAS_KEY: &str = "haskey";
pub const DOOR_OPENED: &str = "dooropened";
pub const GOAL_REACHED: &str = "goalreached";

/// Steps without any option event before an episode is cut off.
pub const NO_PROGRESS_LIMIT: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("bad descriptor: {0}")]
    Descriptor(String),
    #[error("cannot generate layout: {0}")]
    Unsatisfiable(String),
    #[error("episode already terminated")]
    Terminated,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `(x, y)` with `y` growing downwards.
pub type Cell = (i32, i32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Right,
    Down,
    Left,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Right, Direction::Down, Direction::Left];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Direction {
        Self::ALL[i % 4]
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Up => (0, -1),
            Direction::Right => (1, 0),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
        }
    }

    pub fn turn_left(self) -> Direction {
        Self::from_index(self.index() + 3)
    }

    pub fn turn_right(self) -> Direction {
        Self::from_index(self.index() + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Pickup,
    Toggle,
    Drop,
}

impl Action {
    pub const ALL: [Action; 6] =
        [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::Pickup, Action::Toggle, Action::Drop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    Key,
    Door,
    Wall,
    Goal,
}

impl Item {
    pub const ALL: [Item; 4] = [Item::Key, Item::Door, Item::Wall, Item::Goal];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Distance at which a sensor reading falls to zero.
    pub falloff: f64,
    /// Walls and closed doors hide what lies behind them.
    pub line_of_sight: bool,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { falloff: 8.0, line_of_sight: true }
    }
}

/// Static part of a task: what never changes during an episode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub width: i32,
    pub height: i32,
    pub goal: Cell,
    pub walls: BTreeSet<Cell>,
    pub door: Option<Cell>,
}

impl Layout {
    pub fn in_bounds(&self, c: Cell) -> bool {
        c.0 >= 0 && c.1 >= 0 && c.0 < self.width && c.1 < self.height
    }
}

/// Dynamic part of a task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub agent: Cell,
    pub facing: Direction,
    /// Key position while it lies on the floor.
    pub key: Option<Cell>,
    pub carrying: bool,
    pub door_open: bool,
}

impl AgentState {
    pub fn front(&self) -> Cell {
        let (dx, dy) = self.facing.delta();
        (self.agent.0 + dx, self.agent.1 + dy)
    }
}

/// The movement rules, shared by [`GridTask::step`] and the planner.
pub fn transition(layout: &Layout, s: AgentState, action: Action) -> AgentState {
    let mut n = s;
    let front = s.front();
    let door_here = layout.door == Some(front);
    match action {
        Action::TurnLeft => n.facing = s.facing.turn_left(),
        Action::TurnRight => n.facing = s.facing.turn_right(),
        Action::Forward => {
            let blocked = !layout.in_bounds(front)
                || layout.walls.contains(&front)
                || (door_here && !s.door_open)
                || s.key == Some(front);
            if !blocked {
                n.agent = front;
            }
        }
        Action::Pickup => {
            if !s.carrying && s.key == Some(front) {
                n.key = None;
                n.carrying = true;
            }
        }
        Action::Toggle => {
            if door_here && s.carrying {
                n.door_open = true;
            }
        }
        Action::Drop => {
            let free = layout.in_bounds(front)
                && !layout.walls.contains(&front)
                && !door_here
                && front != layout.goal;
            if s.carrying && free {
                n.carrying = false;
                n.key = Some(front);
            }
        }
    }
    n
}

/// Four cardinal readings per item type, indexed `[item][direction]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub intensities: [[f64; 4]; 4],
    pub facing: Direction,
    pub carrying_key: bool,
    pub door_open: bool,
    /// Moving forward would leave the agent where it is.
    #[serde(default)]
    pub front_blocked: bool,
}

impl Observation {
    pub fn get(&self, item: Item, dir: Direction) -> f64 {
        self.intensities[item as usize][dir.index()]
    }

    /// Reading in a direction given relative to the agent's facing
    /// (`Up` = ahead, `Right` = right of the agent, and so on).
    pub fn relative(&self, item: Item, rel: Direction) -> f64 {
        self.get(item, Direction::from_index(self.facing.index() + rel.index()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub option_events: BTreeSet<String>,
}

/// A playable task instance generated from a descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTask {
    pub layout: Layout,
    pub state: AgentState,
    pub descriptor: TaskDescriptor,
    pub seed: u64,
    pub sensor: SensorConfig,
    pub achieved: BTreeSet<String>,
    pub steps_without_progress: usize,
    pub steps: usize,
    pub terminated: bool,
}

fn bresenham_blocked(layout: &Layout, state: &AgentState, from: Cell, to: Cell) -> bool {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        if (x, y) == to {
            return false;
        }
        if layout.walls.contains(&(x, y)) || (layout.door == Some((x, y)) && !state.door_open) {
            return true;
        }
    }
}

/// Cardinal half-planes an offset lies in: one for an axis-aligned offset,
/// two for a diagonal one.
fn half_planes(dx: i32, dy: i32) -> impl Iterator<Item = Direction> {
    let vertical = match dy.signum() {
        -1 => Some(Direction::Up),
        1 => Some(Direction::Down),
        _ => None,
    };
    let horizontal = match dx.signum() {
        -1 => Some(Direction::Left),
        1 => Some(Direction::Right),
        _ => None,
    };
    vertical.into_iter().chain(horizontal)
}

/// Sensor readings for an arbitrary state of `layout`.
pub fn observe_state(layout: &Layout, state: &AgentState, sensor: &SensorConfig) -> Observation {
    let mut intensities = [[0.0f64; 4]; 4];
    let mut sense = |item: Item, cell: Cell| {
        let (dx, dy) = (cell.0 - state.agent.0, cell.1 - state.agent.1);
        if dx == 0 && dy == 0 {
            return;
        }
        if sensor.line_of_sight && bresenham_blocked(layout, state, state.agent, cell) {
            return;
        }
        let d = (dx.abs() + dy.abs()) as f64;
        let v = (1.0 - d / sensor.falloff).max(0.0);
        for dir in half_planes(dx, dy) {
            let slot = &mut intensities[item as usize][dir.index()];
            *slot = (*slot).max(v);
        }
    };
    if let Some(k) = state.key {
        sense(Item::Key, k);
    }
    if let Some(d) = layout.door {
        sense(Item::Door, d);
    }
    for &w in &layout.walls {
        sense(Item::Wall, w);
    }
    sense(Item::Goal, layout.goal);
    let front_blocked = transition(layout, *state, Action::Forward).agent == state.agent;
    Observation {
        intensities,
        facing: state.facing,
        carrying_key: state.carrying,
        door_open: state.door_open,
        front_blocked,
    }
}

/// Which option a target names and how to tell it has finished.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptionTarget {
    HasKey,
    DoorOpened,
    GoalReached,
}

impl OptionTarget {
    pub fn from_name(name: &str) -> Option<OptionTarget> {
        match name {
            HAS_KEY => Some(OptionTarget::HasKey),
            DOOR_OPENED => Some(OptionTarget::DoorOpened),
            GOAL_REACHED => Some(OptionTarget::GoalReached),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptionTarget::HasKey => HAS_KEY,
            OptionTarget::DoorOpened => DOOR_OPENED,
            OptionTarget::GoalReached => GOAL_REACHED,
        }
    }

    /// Execution order of options within an episode.
    pub const ORDER: [OptionTarget; 3] = [OptionTarget::HasKey, OptionTarget::DoorOpened, OptionTarget::GoalReached];

    pub fn achieved(self, layout: &Layout, state: &AgentState) -> bool {
        match self {
            OptionTarget::HasKey => state.carrying,
            OptionTarget::DoorOpened => state.door_open,
            OptionTarget::GoalReached => state.agent == layout.goal,
        }
    }
}

/// Start and stop predicates of an option. Every DoorKey option may start
/// anywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OptionContext {
    pub target: OptionTarget,
}

impl OptionContext {
    pub fn initiation(&self, _task: &GridTask) -> bool {
        true
    }

    pub fn termination(&self, task: &GridTask) -> bool {
        self.target.achieved(&task.layout, &task.state)
    }
}

impl GridTask {
    pub fn observe(&self) -> Observation {
        observe_state(&self.layout, &self.state, &self.sensor)
    }

    pub fn is_enabled(&self, target: &str) -> bool {
        self.descriptor.is_enabled(target)
    }

    /// Enabled options in execution order.
    pub fn option_sequence(&self) -> Vec<OptionTarget> {
        OptionTarget::ORDER.into_iter().filter(|o| self.is_enabled(o.name())).collect()
    }

    pub fn option_context(&self, target: &str) -> Result<OptionContext, GridError> {
        let t = OptionTarget::from_name(target)
            .ok_or_else(|| GridError::InvalidArgument(format!("unknown target `{target}`")))?;
        if !self.is_enabled(target) {
            return Err(GridError::InvalidArgument(format!("target `{target}` is not enabled")));
        }
        if t != OptionTarget::GoalReached && self.layout.door.is_none() {
            return Err(GridError::InvalidArgument(format!("target `{target}` needs a door and key")));
        }
        Ok(OptionContext { target: t })
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, GridError> {
        if self.terminated {
            return Err(GridError::Terminated);
        }
        self.state = transition(&self.layout, self.state, action);
        self.steps += 1;
        let mut events = BTreeSet::new();
        for o in OptionTarget::ORDER {
            let name = o.name();
            if self.is_enabled(name) && !self.achieved.contains(name) && o.achieved(&self.layout, &self.state) {
                events.insert(name.to_string());
                self.achieved.insert(name.to_string());
            }
        }
        if events.is_empty() {
            self.steps_without_progress += 1;
        } else {
            self.steps_without_progress = 0;
        }
        let all_done = self.descriptor.enabled_targets.iter().all(|t| self.achieved.contains(t));
        self.terminated = self.state.agent == self.layout.goal
            || all_done
            || self.steps_without_progress >= NO_PROGRESS_LIMIT;
        Ok(StepResult {
            observation: self.observe(),
            reward: events.len() as f64,
            terminated: self.terminated,
            option_events: events,
        })
    }

    /// Success flag per enabled target so far.
    pub fn outcomes(&self) -> crate::sebn::Outcomes {
        self.descriptor
            .enabled_targets
            .iter()
            .map(|t| (t.clone(), self.achieved.contains(t)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_layout() -> Layout {
        Layout { width: 10, height: 10, goal: (9, 9), walls: BTreeSet::new(), door: None }
    }

    fn state_at(agent: Cell) -> AgentState {
        AgentState { agent, facing: Direction::Up, key: None, carrying: false, door_open: false }
    }

    #[test]
    fn sensor_examples() {
        let mut layout = open_layout();
        layout.goal = (4, 8);
        layout.walls.insert((4, 5));
        let mut s = state_at((4, 4));
        s.key = Some((4, 3));
        let cfg = SensorConfig { line_of_sight: false, ..Default::default() };
        let o = observe_state(&layout, &s, &cfg);
        assert_eq!(o.get(Item::Key, Direction::Up), 0.875);
        assert_eq!(o.get(Item::Wall, Direction::Down), 0.875);
        assert_eq!(o.get(Item::Goal, Direction::Down), 0.5);
        assert_eq!(o.get(Item::Key, Direction::Down), 0.0);
        // Behind the wall the goal is hidden with line of sight on.
        let o = observe_state(&layout, &s, &SensorConfig::default());
        assert_eq!(o.get(Item::Goal, Direction::Down), 0.0);
    }

    #[test]
    fn diagonal_items_light_two_sensors() {
        let mut layout = open_layout();
        layout.goal = (1, 5);
        let o = observe_state(&layout, &state_at((3, 3)), &SensorConfig::default());
        assert_eq!(o.get(Item::Goal, Direction::Left), 0.5);
        assert_eq!(o.get(Item::Goal, Direction::Down), 0.5);
        assert_eq!(o.get(Item::Goal, Direction::Up), 0.0);
        assert_eq!(o.get(Item::Goal, Direction::Right), 0.0);
    }

    #[test]
    fn no_walls_means_silent_wall_sensors() {
        let o = observe_state(&open_layout(), &state_at((3, 3)), &SensorConfig::default());
        assert!(o.intensities[Item::Wall as usize].iter().all(|&v| v == 0.0));
        assert!(o.intensities[Item::Key as usize].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relative_readings_rotate_with_facing() {
        let mut layout = open_layout();
        layout.goal = (5, 3);
        let mut s = state_at((3, 3));
        s.facing = Direction::Right;
        let o = observe_state(&layout, &s, &SensorConfig::default());
        assert_eq!(o.relative(Item::Goal, Direction::Up), 0.75);
        assert_eq!(o.get(Item::Goal, Direction::Right), 0.75);
    }

    #[test]
    fn key_door_rules() {
        let mut layout = open_layout();
        layout.door = Some((2, 0));
        let mut s = state_at((2, 2));
        s.key = Some((2, 1));
        let blocked = transition(&layout, s, Action::Forward);
        assert_eq!(blocked.agent, (2, 2));
        let locked = transition(&layout, s, Action::Toggle);
        assert!(!locked.door_open);
        let s = transition(&layout, s, Action::Pickup);
        assert!(s.carrying && s.key.is_none());
        let s = transition(&layout, s, Action::Forward);
        assert_eq!(s.agent, (2, 1));
        assert_eq!(transition(&layout, s, Action::Forward).agent, (2, 1));
        let s = transition(&layout, s, Action::Toggle);
        assert!(s.door_open);
        let s = transition(&layout, s, Action::Forward);
        assert_eq!(s.agent, (2, 0));
        assert_eq!(transition(&layout, s, Action::Forward).agent, (2, 0));
        assert!(transition(&layout, s, Action::Toggle).door_open);
    }

    #[test]
    fn drop_places_key_ahead() {
        let layout = open_layout();
        let mut s = state_at((4, 4));
        s.carrying = true;
        let d = transition(&layout, s, Action::Drop);
        assert_eq!((d.carrying, d.key), (false, Some((4, 3))));
        let mut edge = s;
        edge.agent = (4, 0);
        assert!(transition(&layout, edge, Action::Drop).carrying);
    }
}
