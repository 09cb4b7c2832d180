use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    solvable, AgentState, Cell, Direction, GridError, GridTask, Layout, SensorConfig, DISTANCE, DOOR_OPENED,
    EXISTS_DOOR, GOAL_REACHED, HAS_KEY, WALL,
};
use crate::sebn::TaskDescriptor;

const MAX_ATTEMPTS: usize = 2000;

/// Chebyshev radius that counts as starting near a point of interest.
pub const NEAR_RADIUS: i32 = 2;

fn feature(descriptor: &TaskDescriptor, name: &str) -> Result<bool, GridError> {
    match descriptor.env.get(name) {
        Some(0) => Ok(false),
        Some(1) => Ok(true),
        Some(v) => Err(GridError::Descriptor(format!("`{name}={v}` must be 0 or 1"))),
        None => Err(GridError::Descriptor(format!("missing feature `{name}`"))),
    }
}

pub(crate) fn chebyshev(a: Cell, b: Cell) -> i32 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

struct Plan {
    layout: Layout,
    key: Option<Cell>,
    agent_side: Vec<Cell>,
}

fn cells(w: i32, h: i32) -> impl Iterator<Item = Cell> {
    (0..h).flat_map(move |y| (0..w).map(move |x| (x, y)))
}

/// A wall spanning the grid with one gap (the door when `locked`); agent
/// and key on one side, goal on the other.
fn spanning_wall(rng: &mut ChaCha8Rng, w: i32, h: i32, locked: bool) -> Option<Plan> {
    let vertical = rng.gen_bool(0.5);
    let (span, across) = if vertical { (w, h) } else { (h, w) };
    if span < 3 {
        return None;
    }
    let line = rng.gen_range(1..span - 1);
    let gap = rng.gen_range(0..across);
    let at = |major: i32, minor: i32| if vertical { (major, minor) } else { (minor, major) };
    let walls: BTreeSet<Cell> = (0..across).filter(|&m| m != gap).map(|m| at(line, m)).collect();
    let agent_low = rng.gen_bool(0.5);
    let side = |c: Cell, low: bool| {
        let major = if vertical { c.0 } else { c.1 };
        if low {
            major < line
        } else {
            major > line
        }
    };
    let agent_side: Vec<Cell> = cells(w, h).filter(|&c| side(c, agent_low)).collect();
    let goal_side: Vec<Cell> = cells(w, h).filter(|&c| side(c, !agent_low)).collect();
    let goal = *goal_side.choose(rng)?;
    let key = if locked { Some(*agent_side.choose(rng)?) } else { None };
    let door = locked.then(|| at(line, gap));
    Some(Plan { layout: Layout { width: w, height: h, goal, walls, door }, key, agent_side })
}

/// Goal in a corner sealed by the locked door on one side and a single wall
/// cell on the other.
fn corner_alcove(rng: &mut ChaCha8Rng, w: i32, h: i32) -> Option<Plan> {
    if w < 2 || h < 2 {
        return None;
    }
    let cx = if rng.gen_bool(0.5) { 0 } else { w - 1 };
    let cy = if rng.gen_bool(0.5) { 0 } else { h - 1 };
    let horizontal = (if cx == 0 { 1 } else { w - 2 }, cy);
    let vertical = (cx, if cy == 0 { 1 } else { h - 2 });
    let (door, wall) = if rng.gen_bool(0.5) { (horizontal, vertical) } else { (vertical, horizontal) };
    let goal = (cx, cy);
    let sealed = [goal, door, wall];
    let agent_side: Vec<Cell> = cells(w, h).filter(|c| !sealed.contains(c)).collect();
    let key = Some(*agent_side.choose(rng)?);
    Some(Plan {
        layout: Layout { width: w, height: h, goal, walls: [wall].into(), door: Some(door) },
        key,
        agent_side,
    })
}

fn open_room(rng: &mut ChaCha8Rng, w: i32, h: i32) -> Option<Plan> {
    let all: Vec<Cell> = cells(w, h).collect();
    let goal = *all.choose(rng)?;
    Some(Plan { layout: Layout { width: w, height: h, goal, walls: BTreeSet::new(), door: None }, key: None, agent_side: all })
}

/// [`generate_env_with`] using the default sensors.
pub fn generate_env(descriptor: &TaskDescriptor, width: i32, height: i32, seed: u64) -> Result<GridTask, GridError> {
    generate_env_with(descriptor, width, height, seed, SensorConfig::default())
}

/// Samples a solvable layout for `descriptor` by rejection. The same
/// descriptor, size and seed always give the same task.
pub fn generate_env_with(
    descriptor: &TaskDescriptor,
    width: i32,
    height: i32,
    seed: u64,
    sensor: SensorConfig,
) -> Result<GridTask, GridError> {
    let far = feature(descriptor, DISTANCE)?;
    let wall = feature(descriptor, WALL)?;
    let locked = feature(descriptor, EXISTS_DOOR)?;
    if let Some(extra) = descriptor.env.keys().find(|k| ![DISTANCE, WALL, EXISTS_DOOR].contains(&k.as_str())) {
        return Err(GridError::Descriptor(format!("unknown feature `{extra}`")));
    }
    if descriptor.enabled_targets.is_empty() {
        return Err(GridError::Descriptor("no enabled targets".into()));
    }
    for t in &descriptor.enabled_targets {
        match t.as_str() {
            GOAL_REACHED => {}
            HAS_KEY | DOOR_OPENED if locked => {}
            HAS_KEY | DOOR_OPENED => return Err(GridError::Descriptor(format!("`{t}` needs exists_door=1"))),
            other => return Err(GridError::Descriptor(format!("unknown target `{other}`"))),
        }
    }
    if width < 1 || height < 1 {
        return Err(GridError::InvalidArgument("grid size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let plan = match (wall, locked) {
            (true, _) => spanning_wall(&mut rng, width, height, locked),
            (false, true) => corner_alcove(&mut rng, width, height),
            (false, false) => open_room(&mut rng, width, height),
        };
        let Some(plan) = plan else { continue };
        let pois: Vec<Cell> = plan.key.into_iter().chain([plan.layout.goal]).collect();
        let starts: Vec<Cell> = plan
            .agent_side
            .iter()
            .copied()
            .filter(|c| *c != plan.layout.goal && Some(*c) != plan.key)
            .filter(|c| {
                let near = pois.iter().any(|&p| chebyshev(*c, p) <= NEAR_RADIUS);
                near != far
            })
            .collect();
        let Some(&agent) = starts.choose(&mut rng) else { continue };
        let facing = Direction::from_index(rng.gen_range(0..4));
        let task = GridTask {
            layout: plan.layout,
            state: AgentState { agent, facing, key: plan.key, carrying: false, door_open: false },
            descriptor: descriptor.clone(),
            seed,
            sensor: sensor.clone(),
            achieved: BTreeSet::new(),
            steps_without_progress: 0,
            steps: 0,
            terminated: false,
        };
        if solvable(&task) {
            return Ok(task);
        }
    }
    Err(GridError::Unsatisfiable(format!("no layout for {descriptor} on a {width}x{height} grid")))
}
