use std::collections::{BTreeMap, VecDeque};

use super::{transition, Action, AgentState, GridTask, OptionTarget};

/// Shortest action sequence that achieves every enabled target of `task`
/// from its current state, or `None` when no such sequence exists.
///
/// Entering the goal ends an episode, so the goal only counts once every
/// other enabled target is done. Dropping the key never helps and is not
/// considered.
pub fn bfs_plan(task: &GridTask) -> Option<Vec<Action>> {
    let needed = task.option_sequence();
    let layout = &task.layout;
    let done = |s: &AgentState| {
        needed.iter().all(|o| task.achieved.contains(o.name()) || o.achieved(layout, s))
    };
    let start = task.state;
    if done(&start) {
        return Some(Vec::new());
    }
    let mut parent: BTreeMap<AgentState, (AgentState, Action)> = BTreeMap::new();
    let mut queue = VecDeque::from([start]);
    let moves = [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::Pickup, Action::Toggle];
    while let Some(s) = queue.pop_front() {
        for a in moves {
            let n = transition(layout, s, a);
            if n == start || parent.contains_key(&n) {
                continue;
            }
            parent.insert(n, (s, a));
            if done(&n) {
                let mut path = vec![a];
                let mut cur = s;
                while cur != start {
                    let (p, act) = parent[&cur];
                    path.push(act);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            if !OptionTarget::GoalReached.achieved(layout, &n) {
                queue.push_back(n);
            }
        }
    }
    None
}

pub fn solvable(task: &GridTask) -> bool {
    bfs_plan(task).is_some()
}
