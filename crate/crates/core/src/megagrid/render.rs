use serde::{Deserialize, Serialize};

use super::{generate_env_with, Action, Direction, GridError, GridTask, SensorConfig, StepResult};
use crate::sebn::TaskDescriptor;

/// ASCII picture of the current state: `#` wall, `L` locked door, `/` open
/// door, `K` key, `G` goal and the agent as an arrow.
pub fn render(task: &GridTask) -> String {
    let l = &task.layout;
    let s = &task.state;
    let mut out = String::new();
    for y in 0..l.height {
        for x in 0..l.width {
            let c = (x, y);
            let glyph = if c == s.agent {
                match s.facing {
                    Direction::Up => '^',
                    Direction::Right => '>',
                    Direction::Down => 'v',
                    Direction::Left => '<',
                }
            } else if l.walls.contains(&c) {
                '#'
            } else if l.door == Some(c) {
                if s.door_open {
                    '/'
                } else {
                    'L'
                }
            } else if s.key == Some(c) {
                'K'
            } else if l.goal == c {
                'G'
            } else {
                '.'
            };
            out.push(glyph);
        }
        out.push('\n');
    }
    out
}

/// Everything needed to replay an episode exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub seed: u64,
    pub width: i32,
    pub height: i32,
    pub descriptor: TaskDescriptor,
    #[serde(default)]
    pub sensor: SensorConfig,
    pub actions: Vec<Action>,
}

/// Regenerates the task and re-applies the recorded actions.
pub fn replay(record: &ReplayRecord) -> Result<(GridTask, Vec<StepResult>), GridError> {
    let mut task = generate_env_with(&record.descriptor, record.width, record.height, record.seed, record.sensor.clone())?;
    let mut results = Vec::with_capacity(record.actions.len());
    for &a in &record.actions {
        results.push(task.step(a)?);
    }
    Ok((task, results))
}
