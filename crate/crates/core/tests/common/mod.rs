//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls the library code it is used to check.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use mazeadapt::autodiff::{grad_check, ParamVector, Tape, Var};
use mazeadapt::controller::{Controller, ControllerConfig, ControllerInput, PreparedTask, AdaptationTask};
use mazeadapt::gcn::{self, GcnConfig, GcnMode, GraphInput, InputOptions, Target};
use mazeadapt::maze::{create_maze_graph, sample_reward_mask, GridMaze};
use mazeadapt::oracle::{bfs_shortest_path, dp_value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-weight Dijkstra from start to goal over the active edges, in edges.
pub fn dijkstra_distance(maze: &GridMaze) -> Option<usize> {
    let nn = maze.num_nodes();
    let mut adj = vec![Vec::new(); nn];
    for &(u, v) in maze.edges() {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut dist = vec![usize::MAX; nn];
    let mut heap = BinaryHeap::new();
    dist[maze.start()] = 0;
    heap.push(Reverse((0usize, maze.start())));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &v in &adj[u] {
            if d + 1 < dist[v] {
                dist[v] = d + 1;
                heap.push(Reverse((d + 1, v)));
            }
        }
    }
    (dist[maze.goal()] != usize::MAX).then_some(dist[maze.goal()])
}

/// Textbook Pearson correlation, computed with explicit sums.
pub fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for i in 0..a.len() {
        sa += a[i];
        sb += b[i];
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma).powi(2);
        db += (b[i] - mb).powi(2);
    }
    num / (da * db).sqrt()
}

/// Average ranks by counting, O(n²): rank = #smaller + (#equal + 1) / 2.
pub fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Reference `(pearson, spearman)` of latent vs coordinate distances,
/// iterating the upper triangle with an explicit double loop.
pub fn naive_distance_correlations(latent: &[Vec<f64>], coords: &[[f64; 2]]) -> (f64, f64) {
    let mut dz = Vec::new();
    let mut dm = Vec::new();
    for i in 0..latent.len() {
        for j in (i + 1)..latent.len() {
            let mut s = 0.0;
            for (a, b) in latent[i].iter().zip(&latent[j]) {
                s += (a - b).powi(2);
            }
            dz.push(s.sqrt());
            dm.push(((coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2)).sqrt());
        }
    }
    (naive_pearson(&dz, &dm), naive_pearson(&naive_ranks(&dz), &naive_ranks(&dm)))
}

pub const GRAD_TOL: f64 = 1e-4;

fn small_gcn(mode: GcnMode) -> GcnConfig {
    GcnConfig::new(5, 4, 1, mode).unwrap()
}

fn random_theta(cfg: &GcnConfig, r: &mut ChaCha8Rng) -> ParamVector {
    let layout = cfg.layout();
    let data = (0..layout.total_len()).map(|_| r.random_range(-0.8..0.8)).collect();
    ParamVector::new(layout, data).unwrap()
}

fn blocked_three(seed: u64) -> GridMaze {
    let p = [0.0, 0.1, 0.2, 0.3][(seed % 4) as usize];
    create_maze_graph(3, p, seed, true).unwrap()
}

/// Worst relative gradient error of the node-classification BCE on a random 3×3 instance.
pub fn gcn_bce_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let maze = blocked_three(seed);
    let graph = GraphInput::from_maze(&maze, InputOptions::default()).unwrap();
    let labels = bfs_shortest_path(&maze).unwrap().labels;
    let cfg = small_gcn(GcnMode::Classify);
    let theta = random_theta(&cfg, &mut r);
    grad_check(
        |tape: &mut Tape, leaf: Var| {
            let vars = gcn::forward_on_tape(tape, &graph, leaf, &cfg)?;
            gcn::loss_on_tape(tape, vars, &Target::Labels(labels.clone()))
        },
        &theta.data,
    )
    .unwrap()
}

/// Worst relative gradient error of the value-regression MSE on a random 3×3 mask.
pub fn gcn_mse_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mask = sample_reward_mask(3, 0.4, seed).unwrap();
    let graph = GraphInput::for_rewards(&mask, &GridMaze::full(3).unwrap()).unwrap();
    let values = dp_value(&mask).values;
    let cfg = small_gcn(GcnMode::Regress);
    let theta = random_theta(&cfg, &mut r);
    grad_check(
        |tape: &mut Tape, leaf: Var| {
            let vars = gcn::forward_on_tape(tape, &graph, leaf, &cfg)?;
            gcn::loss_on_tape(tape, vars, &Target::Values(values.clone()))
        },
        &theta.data,
    )
    .unwrap()
}

/// Worst relative gradient error of the distance-preservation loss on a 3×3 grid.
pub fn gcn_distance_grad_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let maze = blocked_three(seed);
    let opts = InputOptions {
        features: mazeadapt::gcn::FeatureSet::Coords,
        normalize_coords: true,
    };
    let graph = GraphInput::from_maze(&maze, opts).unwrap();
    let target = Target::for_graph_distances(&graph).unwrap();
    let cfg = GcnConfig::new(2, 4, 1, GcnMode::DistancePreserve).unwrap();
    let theta = random_theta(&cfg, &mut r);
    grad_check(
        |tape: &mut Tape, leaf: Var| {
            let vars = gcn::forward_on_tape(tape, &graph, leaf, &cfg)?;
            gcn::loss_on_tape(tape, vars, &target)
        },
        &theta.data,
    )
    .unwrap()
}

/// Worst relative error of d(adapted BCE)/dφ through controller, θ′ = θ + Δθ
/// and the adapted forward pass, on a random 3×3 instance with random φ.
pub fn controller_grad_error(seed: u64, input: ControllerInput) -> f64 {
    let mut r = rng(seed);
    let maze = blocked_three(seed);
    let graph = GraphInput::from_maze(&maze, InputOptions::default()).unwrap();
    let labels = bfs_shortest_path(&maze).unwrap().labels;
    let gcn_cfg = small_gcn(GcnMode::Classify);
    let theta = random_theta(&gcn_cfg, &mut r);
    let config = ControllerConfig {
        input,
        hidden: vec![6],
        delta_scale: 0.5,
        ..Default::default()
    };
    let mut controller = Controller::new(config, gcn_cfg, 9, seed).unwrap();
    for v in controller.params.data.iter_mut() {
        *v = r.random_range(-0.3..0.3);
    }
    let task = AdaptationTask {
        id: 0,
        graph,
        target: Target::Labels(labels),
    };
    let prepared = PreparedTask::new(&task, &controller, &theta).unwrap();
    let phi0 = controller.params.data.clone();
    grad_check(
        |tape: &mut Tape, leaf: Var| controller.task_loss_on_tape(tape, &prepared, &theta, leaf),
        &phi0,
    )
    .unwrap()
}

/// A shrunken configuration for experiment `id` that runs in well under a second.
pub fn small_config(id: u8, master_seed: u64) -> mazeadapt::harness::ExperimentConfig {
    let mut cfg = mazeadapt::harness::ExperimentConfig::for_experiment(id, master_seed).unwrap();
    cfg.maze_size = 5;
    cfg.num_tasks = 3;
    cfg.num_test = 2;
    cfg.gcn.epochs = cfg.gcn.epochs.min(150);
    cfg.controller.epochs = 15;
    cfg.controller.hidden = vec![16];
    if id == 3 {
        cfg.maze_size = 4;
        cfg.studies = vec![mazeadapt::harness::SizeStudy {
            train_sizes: vec![4],
            eval_sizes: vec![5, 6],
        }];
    }
    cfg
}
