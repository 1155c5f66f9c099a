//! Exact targets: BFS shortest-path labels, the Down/Right dynamic-programming
//! value function, greedy optimal policies and exhaustive path enumeration.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maze::{GridMaze, RewardMask};

/// Per-node membership of the canonical shortest start→goal path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLabels {
    pub labels: Vec<f64>,
    pub path: Vec<usize>,
}

impl PathLabels {
    pub fn on_path_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0.5).count()
    }
}

/// Breadth-first search expanding Right, Down, Left, Up and keeping the
/// first-discovered predecessor, so ties resolve deterministically.
pub fn bfs_shortest_path(maze: &GridMaze) -> Result<PathLabels> {
    let nn = maze.num_nodes();
    let (start, goal) = (maze.start(), maze.goal());
    let mut pred = vec![usize::MAX; nn];
    let mut seen = vec![false; nn];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        if v == goal {
            break;
        }
        for w in maze.neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                pred[w] = v;
                queue.push_back(w);
            }
        }
    }
    if !seen[goal] {
        return Err(Error::Unreachable { start, goal });
    }
    let mut path = vec![goal];
    let mut v = goal;
    while v != start {
        v = pred[v];
        path.push(v);
    }
    path.reverse();
    let mut labels = vec![0.0; nn];
    for &v in &path {
        labels[v] = 1.0;
    }
    Ok(PathLabels { labels, path })
}

/// DP values `V(i, j)` over the Down/Right grid DAG, stored in node-id order
/// (`id = j + n·i`, row `i`, column `j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub n: usize,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl ValueTable {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j + self.n * i]
    }

    /// Mean and population variance of the values.
    pub fn variance(&self) -> f64 {
        let m = self.values.iter().sum::<f64>() / self.values.len() as f64;
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }
}

/// `V(i,j) = R(i,j) + max(V(i+1,j), V(i,j+1))`, with `V(goal) = R(goal)`.
pub fn dp_value(mask: &RewardMask) -> ValueTable {
    let n = mask.n();
    let rewards = mask.rewards();
    let mut values = vec![0.0f64; n * n];
    for i in (0..n).rev() {
        for j in (0..n).rev() {
            let id = j + n * i;
            let down = (i + 1 < n).then(|| values[j + n * (i + 1)]);
            let right = (j + 1 < n).then(|| values[id + 1]);
            let best = match (down, right) {
                (Some(d), Some(r)) => d.max(r),
                (Some(d), None) => d,
                (None, Some(r)) => r,
                (None, None) => 0.0,
            };
            values[id] = rewards[id] + best;
        }
    }
    ValueTable { n, values, rewards }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Down,
    Right,
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub n: usize,
    pub actions: Vec<Action>,
}

/// Greedy action per node from any value-shaped vector: argmax over the
/// existing Down/Right successors, ties to Down.
pub fn greedy_policy(n: usize, values: &[f64]) -> PolicyTable {
    let mut actions = Vec::with_capacity(n * n);
    for id in 0..n * n {
        let (i, j) = (id / n, id % n);
        let action = match (i + 1 < n, j + 1 < n) {
            (false, false) => Action::Terminal,
            (true, false) => Action::Down,
            (false, true) => Action::Right,
            (true, true) => {
                if values[id + n] >= values[id + 1] {
                    Action::Down
                } else {
                    Action::Right
                }
            }
        };
        actions.push(action);
    }
    PolicyTable { n, actions }
}

pub fn optimal_policy(values: &ValueTable) -> PolicyTable {
    greedy_policy(values.n, &values.values)
}

/// All simple start→goal paths, by depth-first search.
pub fn enumerate_simple_paths(maze: &GridMaze, limit: usize) -> Result<Vec<Vec<usize>>> {
    fn dfs(
        maze: &GridMaze,
        v: usize,
        on: &mut [bool],
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        limit: usize,
    ) -> Result<()> {
        if v == maze.goal() {
            if out.len() >= limit {
                return Err(Error::OracleScale { limit });
            }
            out.push(stack.clone());
            return Ok(());
        }
        for w in maze.neighbors(v) {
            if !on[w] {
                on[w] = true;
                stack.push(w);
                dfs(maze, w, on, stack, out, limit)?;
                stack.pop();
                on[w] = false;
            }
        }
        Ok(())
    }
    let mut on = vec![false; maze.num_nodes()];
    on[maze.start()] = true;
    let mut out = Vec::new();
    dfs(maze, maze.start(), &mut on, &mut vec![maze.start()], &mut out, limit)?;
    Ok(out)
}

/// Every Down/Right path from `(0,0)` to `(n−1,n−1)` with its total reward.
pub fn enumerate_monotone_paths(mask: &RewardMask, limit: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    let n = mask.n();
    let rewards = mask.rewards();
    let mut out = Vec::new();
    let mut stack = vec![0usize];
    fn walk(
        n: usize,
        rewards: &[f64],
        stack: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
        limit: usize,
    ) -> Result<()> {
        let v = *stack.last().expect("non-empty");
        let (i, j) = (v / n, v % n);
        if i + 1 == n && j + 1 == n {
            if out.len() >= limit {
                return Err(Error::OracleScale { limit });
            }
            let score = stack.iter().map(|&u| rewards[u]).sum();
            out.push((stack.clone(), score));
            return Ok(());
        }
        if i + 1 < n {
            stack.push(v + n);
            walk(n, rewards, stack, out, limit)?;
            stack.pop();
        }
        if j + 1 < n {
            stack.push(v + 1);
            walk(n, rewards, stack, out, limit)?;
            stack.pop();
        }
        Ok(())
    }
    walk(n, &rewards, &mut stack, &mut out, limit)?;
    Ok(out)
}
