//! Grid mazes: seeded edge blocking, node features, Gaussian feature
//! replacement and reward masks.
//!
//! Node ids are `x + n·y` with `x` the column and `y` the row. The start is
//! always the top-left corner and the goal the bottom-right corner.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Attempts made by [`create_maze_graph`] before giving up on connectivity.
pub const MAX_CONNECT_RETRIES: usize = 1000;

/// Width of the spatial feature vector `[x, y, blockages, original_degree, current_degree]`.
pub const SPATIAL_FEATURE_DIM: usize = 5;

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Spatial,
    Gaussian,
}

/// How node features are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMode {
    Spatial,
    GaussianNoise { dim: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMaze {
    n: usize,
    start: usize,
    goal: usize,
    edges: Vec<(usize, usize)>,
    removed_edges: Vec<(usize, usize)>,
    features: Vec<Vec<f64>>,
    feature_kind: FeatureKind,
}

/// All `2n(n−1)` edges of the full 4-neighbour grid, row-major, right edge
/// before down edge at each node.
pub fn grid_edges(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(2 * n * n.saturating_sub(1));
    for y in 0..n {
        for x in 0..n {
            let id = x + n * y;
            if x + 1 < n {
                out.push((id, id + 1));
            }
            if y + 1 < n {
                out.push((id, id + n));
            }
        }
    }
    out
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

fn degrees(num_nodes: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut deg = vec![0; num_nodes];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    deg
}

impl GridMaze {
    /// The unblocked `n×n` grid with spatial features.
    pub fn full(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(contract("maze side length must be at least 1"));
        }
        Ok(Self::from_removal(n, grid_edges(n), Vec::new()))
    }

    fn from_removal(n: usize, mut active: Vec<(usize, usize)>, removed: Vec<(usize, usize)>) -> Self {
        active.sort_unstable();
        let mut maze = Self {
            n,
            start: 0,
            goal: n * n - 1,
            edges: active,
            removed_edges: removed,
            features: Vec::new(),
            feature_kind: FeatureKind::Spatial,
        };
        maze.features = maze.spatial_features();
        maze
    }

    fn spatial_features(&self) -> Vec<Vec<f64>> {
        let nn = self.num_nodes();
        let original = degrees(nn, &grid_edges(self.n));
        let current = degrees(nn, &self.edges);
        (0..nn)
            .map(|v| {
                let (x, y) = self.coords(v);
                vec![
                    x as f64,
                    y as f64,
                    (original[v] - current[v]) as f64,
                    original[v] as f64,
                    current[v] as f64,
                ]
            })
            .collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_nodes(&self) -> usize {
        self.n * self.n
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    /// Active edges `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Removed edges in removal order.
    pub fn removed_edges(&self) -> &[(usize, usize)] {
        &self.removed_edges
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.feature_kind
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn id(&self, x: usize, y: usize) -> usize {
        x + self.n * y
    }

    /// `(x, y)` = (column, row).
    pub fn coords(&self, v: usize) -> (usize, usize) {
        (v % self.n, v / self.n)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&ordered(u, v)).is_ok()
    }

    pub fn current_degrees(&self) -> Vec<usize> {
        degrees(self.num_nodes(), &self.edges)
    }

    /// Active neighbours in Right, Down, Left, Up order.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let (x, y) = self.coords(v);
        let n = self.n;
        let mut out = Vec::with_capacity(4);
        let candidates = [
            (x + 1 < n).then(|| v + 1),
            (y + 1 < n).then(|| v + n),
            (x > 0).then(|| v - 1),
            (y > 0).then(|| v - n),
        ];
        for w in candidates.into_iter().flatten() {
            if self.has_edge(v, w) {
                out.push(w);
            }
        }
        out
    }

    /// Whether the goal is reachable from the start over active edges.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_nodes()];
        let mut queue = VecDeque::from([self.start]);
        seen[self.start] = true;
        while let Some(v) = queue.pop_front() {
            if v == self.goal {
                return true;
            }
            for w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        false
    }

    /// Checks every structural invariant; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(contract("n must be positive"));
        }
        let nn = n * n;
        if self.start != 0 || self.goal != nn - 1 {
            return Err(contract(format!(
                "start/goal must be 0/{} but are {}/{}",
                nn - 1,
                self.start,
                self.goal
            )));
        }
        let mut all: Vec<(usize, usize)> = self
            .edges
            .iter()
            .chain(&self.removed_edges)
            .copied()
            .collect();
        if all.iter().any(|&(u, v)| u >= v) {
            return Err(contract("edge pairs must satisfy u < v"));
        }
        all.sort_unstable();
        let mut full = grid_edges(n);
        full.sort_unstable();
        if all != full {
            return Err(contract(
                "active and removed edges must partition the full grid",
            ));
        }
        if self.features.len() != nn {
            return Err(contract(format!(
                "expected {} feature rows, found {}",
                nn,
                self.features.len()
            )));
        }
        let d = self.feature_dim();
        if d == 0 || self.features.iter().any(|f| f.len() != d) {
            return Err(contract("feature rows must share a positive width"));
        }
        if self.feature_kind == FeatureKind::Spatial && self.features != self.spatial_features() {
            return Err(contract("spatial features disagree with the edge sets"));
        }
        Ok(())
    }

    /// Removed edges incident to each node, recounted from `removed_edges`.
    pub fn blockage_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_nodes()];
        for &(u, v) in &self.removed_edges {
            c[u] += 1;
            c[v] += 1;
        }
        c
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MazeJson::from(self)).expect("maze serialises")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&MazeJson::from(self)).expect("maze serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: MazeJson = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Parse {
                offset: byte_offset(text, inner.line(), inner.column()),
                path,
                message: inner.to_string(),
            }
        })?;
        let maze = GridMaze {
            n: raw.n,
            start: raw.start,
            goal: raw.goal,
            edges: raw.edges.iter().map(|e| (e[0], e[1])).collect(),
            removed_edges: raw.removed_edges.iter().map(|e| (e[0], e[1])).collect(),
            features: raw.features,
            feature_kind: raw.feature_mode,
        };
        if !maze.edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Parse {
                offset: 0,
                path: "edges".into(),
                message: "edges must be sorted and unique".into(),
            });
        }
        maze.validate().map_err(|e| Error::Parse {
            offset: 0,
            path: ".".into(),
            message: e.to_string(),
        })?;
        Ok(maze)
    }
}

pub(crate) fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Wire layout of a maze file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MazeJson {
    n: usize,
    start: usize,
    goal: usize,
    edges: Vec<[usize; 2]>,
    removed_edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    feature_mode: FeatureKind,
}

impl From<&GridMaze> for MazeJson {
    fn from(m: &GridMaze) -> Self {
        Self {
            n: m.n,
            start: m.start,
            goal: m.goal,
            edges: m.edges.iter().map(|&(u, v)| [u, v]).collect(),
            removed_edges: m.removed_edges.iter().map(|&(u, v)| [u, v]).collect(),
            features: m.features.clone(),
            feature_mode: m.feature_kind,
        }
    }
}

/// Blocks `⌊p · 2n(n−1)⌋` edges chosen by a seeded shuffle.
///
/// With `require_connected`, seeds `seed, seed+1, …` are tried until the
/// goal is reachable. Returns the maze and the seed that produced it.
pub fn create_maze_graph_seeded(
    n: usize,
    p: f64,
    seed: u64,
    require_connected: bool,
) -> Result<(GridMaze, u64)> {
    if n < 2 {
        return Err(contract(format!("maze side length must be ≥ 2, got {n}")));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(contract(format!("block probability must lie in [0, 1), got {p}")));
    }
    let all = grid_edges(n);
    let num_blocked = (p * all.len() as f64).floor() as usize;
    for attempt in 0..=MAX_CONNECT_RETRIES {
        let s = seed.wrapping_add(attempt as u64);
        let mut shuffled = all.clone();
        shuffled.shuffle(&mut rng_for(s));
        let removed = shuffled[..num_blocked].to_vec();
        let active = shuffled[num_blocked..].to_vec();
        let maze = GridMaze::from_removal(n, active, removed);
        if !require_connected || maze.is_connected() {
            return Ok((maze, s));
        }
    }
    Err(Error::Generation {
        n,
        p,
        seed,
        retries: MAX_CONNECT_RETRIES,
    })
}

pub fn create_maze_graph(n: usize, p: f64, seed: u64, require_connected: bool) -> Result<GridMaze> {
    create_maze_graph_seeded(n, p, seed, require_connected).map(|(m, _)| m)
}

/// Replaces every feature vector with `d` i.i.d. standard normal draws,
/// leaving the graph untouched.
pub fn randomize_features(maze: &GridMaze, d: usize, seed: u64) -> Result<GridMaze> {
    if d == 0 {
        return Err(contract("Gaussian feature dimension must be ≥ 1"));
    }
    let mut rng = rng_for(seed);
    let mut out = maze.clone();
    out.features = (0..maze.num_nodes())
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    out.feature_kind = FeatureKind::Gaussian;
    Ok(out)
}

/// Applies a [`FeatureMode`] to a spatially-featured maze.
pub fn apply_feature_mode(maze: &GridMaze, mode: FeatureMode) -> Result<GridMaze> {
    match mode {
        FeatureMode::Spatial => Ok(maze.clone()),
        FeatureMode::GaussianNoise { dim, seed } => randomize_features(maze, dim, seed),
    }
}

/// Per-node reward sign in `{+1, −1}`; the start is always `+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardMask {
    n: usize,
    flip_prob: f64,
    signs: Vec<i8>,
}

impl RewardMask {
    pub fn ones(n: usize) -> Self {
        Self {
            n,
            flip_prob: 0.0,
            signs: vec![1; n * n],
        }
    }

    /// Builds a mask from explicit signs (node-id order); the recorded flip
    /// probability is the observed flipped fraction.
    pub fn from_signs(n: usize, signs: Vec<i8>) -> Result<Self> {
        if signs.len() != n * n {
            return Err(contract(format!(
                "mask needs {} entries, got {}",
                n * n,
                signs.len()
            )));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(contract("mask entries must be ±1"));
        }
        if signs[0] != 1 {
            return Err(contract("mask at the start must be +1"));
        }
        let flipped = signs.iter().filter(|&&s| s < 0).count() as f64;
        Ok(Self {
            n,
            flip_prob: flipped / signs.len() as f64,
            signs,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn flip_prob(&self) -> f64 {
        self.flip_prob
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// Multiplier at row `i`, column `j`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        f64::from(self.signs[j + self.n * i])
    }

    /// `R(i, j) = mask(i, j) · (i + j)`.
    pub fn reward(&self, i: usize, j: usize) -> f64 {
        self.at(i, j) * (i + j) as f64
    }

    /// Rewards in node-id order.
    pub fn rewards(&self) -> Vec<f64> {
        (0..self.n * self.n)
            .map(|v| self.reward(v / self.n, v % self.n))
            .collect()
    }

    pub fn flipped_fraction(&self) -> f64 {
        self.signs.iter().filter(|&&s| s < 0).count() as f64 / self.signs.len() as f64
    }
}

/// Each non-start node is `−1` with probability `q`, independently.
pub fn sample_reward_mask(n: usize, q: f64, seed: u64) -> Result<RewardMask> {
    if n == 0 {
        return Err(contract("mask side length must be ≥ 1"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(contract(format!("flip probability must lie in [0, 1], got {q}")));
    }
    let mut rng = rng_for(seed);
    let mut signs = vec![1i8; n * n];
    for s in signs.iter_mut().skip(1) {
        if rng.random_bool(q) {
            *s = -1;
        }
    }
    Ok(RewardMask {
        n,
        flip_prob: q,
        signs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unblocked_ten_has_180_edges() {
        let m = create_maze_graph(10, 0.0, 1, true).unwrap();
        assert_eq!(m.edges().len(), 180);
        assert!(m.removed_edges().is_empty());
        assert_eq!(m.features()[0], vec![0.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn ten_percent_blocks_eighteen() {
        let m = create_maze_graph(10, 0.1, 3, false).unwrap();
        assert_eq!(m.removed_edges().len(), 18);
        assert_eq!(m.edges().len() + m.removed_edges().len(), 180);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(create_maze_graph(1, 0.0, 0, false).is_err());
        assert!(create_maze_graph(4, 1.0, 0, false).is_err());
        assert!(create_maze_graph(4, -0.1, 0, false).is_err());
    }

    #[test]
    fn retry_budget_exhaustion_reports_parameters() {
        // removing 11 of 12 edges of a 3×3 grid never leaves the corners joined
        match create_maze_graph(3, 0.95, 5, true) {
            Err(Error::Generation { n, seed, .. }) => {
                assert_eq!(n, 3);
                assert_eq!(seed, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn neighbor_order_is_right_down_left_up() {
        let m = GridMaze::full(3).unwrap();
        assert_eq!(m.neighbors(4), vec![5, 7, 3, 1]);
        assert_eq!(m.neighbors(0), vec![1, 3]);
    }

    #[test]
    fn mask_extremes() {
        let m0 = sample_reward_mask(5, 0.0, 1).unwrap();
        assert!(m0.signs().iter().all(|&s| s == 1));
        let m1 = sample_reward_mask(5, 1.0, 1).unwrap();
        assert_eq!(m1.signs()[0], 1);
        assert!(m1.signs()[1..].iter().all(|&s| s == -1));
        assert!(sample_reward_mask(5, 1.5, 1).is_err());
    }

    #[test]
    fn gaussian_dimension_must_be_positive() {
        let m = GridMaze::full(3).unwrap();
        assert!(randomize_features(&m, 0, 1).is_err());
    }

    #[test]
    fn missing_goal_is_named() {
        let m = GridMaze::full(2).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("goal");
        let err = GridMaze::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("goal"), "{err}");
    }

    #[test]
    fn malformed_field_reports_path_and_offset() {
        let text = r#"{"n": 2, "start": 0, "goal": "three"}"#;
        match GridMaze::from_json(text) {
            Err(Error::Parse { offset, path, .. }) => {
                assert_eq!(path, "goal");
                assert!(offset > 20 && offset <= text.len(), "offset {offset}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_edges_rejected() {
        let m = GridMaze::full(2).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["edges"].as_array_mut().unwrap().pop();
        assert!(GridMaze::from_json(&v.to_string()).is_err());
    }
}
