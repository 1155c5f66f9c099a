use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::artifacts::{embeddings_csv, projection_csv, values_csv, write_file, Checkpoint};
use super::config::ExperimentConfig;
use super::report::{EmbeddingAnalysis, EvalEntry, EvalGroup, RunReport};
use crate::autodiff::ParamVector;
use crate::controller::{train_controller_with, AdaptationTask, Controller, ControllerInput, LossTrace};
use crate::error::{contract, Error, Result};
use crate::gcn::{
    self, FeatureSet, GcnConfig, GcnMode, GraphInput, InputOptions, Target, TrainHyper,
};
use crate::maze::{create_maze_graph_seeded, randomize_features, sample_reward_mask, GridMaze, RewardMask, SPATIAL_FEATURE_DIM};
use crate::metrics::{
    bce_and_accuracy, distance_correlations, kmeans, linear_projection_2d, policy_accuracy, regression_report,
    MazeMetric, MetricReport,
};
use crate::oracle::{bfs_shortest_path, dp_value, optimal_policy};

/// Spacing between the base seeds of consecutive maze slots. Connectivity
/// retries advance a seed by at most [`crate::maze::MAX_CONNECT_RETRIES`],
/// so slots never share an effective seed.
pub const SEED_STRIDE: u64 = 10_000;

const KMEANS_MAX_ITERS: usize = 300;

/// Base seed of maze slot `slot`. Slots `0..M` are training tasks, `M..M+T`
/// held-out mazes, and later slots are resampled training tasks.
pub fn slot_seed(maze_seed: u64, slot: usize) -> u64 {
    maze_seed.wrapping_add(SEED_STRIDE.wrapping_mul(1 + slot as u64))
}

struct ArtifactSink {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl ArtifactSink {
    fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(|e| Error::State(format!("creating {}: {e}", d.display())))?;
        }
        Ok(Self {
            dir: dir.map(Path::to_path_buf),
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, contents: impl FnOnce() -> String) -> Result<()> {
        if let Some(d) = &self.dir {
            write_file(d, name, &contents())?;
            self.written.push(name.to_string());
        }
        Ok(())
    }
}

/// Runs the experiment named by `config.id`; artifacts go to `out_dir` when given.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let mut sink = ArtifactSink::new(out_dir)?;
    let mut report = match config.id {
        1 => classification_experiment(config, ControllerInput::Basic, &mut sink)?,
        2 => experiment_2(config, &mut sink)?,
        3 => experiment_3(config, &mut sink)?,
        4 => experiment_4(config, &mut sink)?,
        5 => experiment_5(config, &mut sink)?,
        id => return Err(contract(format!("experiment id must be 1..=5, got {id}"))),
    };
    report.artifacts = sink.written;
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

fn with_id(config: &ExperimentConfig, id: u8) -> Result<ExperimentConfig> {
    if config.id != id {
        return Err(contract(format!("config is for experiment {}, not {id}", config.id)));
    }
    Ok(config.clone())
}

pub fn run_experiment_1(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    run_experiment(&with_id(config, 1)?, out_dir)
}

pub fn run_experiment_2(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    run_experiment(&with_id(config, 2)?, out_dir)
}

pub fn run_experiment_3(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    run_experiment(&with_id(config, 3)?, out_dir)
}

pub fn run_experiment_4(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    run_experiment(&with_id(config, 4)?, out_dir)
}

pub fn run_experiment_5(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    run_experiment(&with_id(config, 5)?, out_dir)
}

/// A generated blocked maze and the bookkeeping that reproduces it.
#[derive(Debug, Clone)]
pub struct BlockedMaze {
    pub slot: usize,
    pub block_prob: f64,
    pub seed: u64,
    pub maze: GridMaze,
}

/// Generates one blocked maze per slot; block probabilities are cycled by position.
pub fn blocked_mazes(config: &ExperimentConfig, n: usize, probs: &[f64], slots: &[usize]) -> Result<Vec<BlockedMaze>> {
    slots
        .par_iter()
        .enumerate()
        .map(|(k, &slot)| {
            let p = probs[k % probs.len()];
            let (maze, seed) = create_maze_graph_seeded(n, p, slot_seed(config.seeds.maze, slot), config.require_connected)?;
            Ok(BlockedMaze {
                slot,
                block_prob: p,
                seed,
                maze,
            })
        })
        .collect()
}

fn assert_disjoint(train: &[u64], held_out: &[u64]) -> Result<()> {
    let a: BTreeSet<u64> = train.iter().copied().collect();
    if let Some(s) = held_out.iter().find(|s| a.contains(s)) {
        return Err(Error::State(format!("held-out maze seed {s} also used for training")));
    }
    Ok(())
}

fn gcn_hyper(config: &ExperimentConfig) -> TrainHyper {
    TrainHyper {
        lr: config.gcn.lr,
        epochs: config.gcn.epochs,
        momentum: config.gcn.momentum,
        seed: config.seeds.init,
    }
}

fn isomorphism(latent: &crate::autodiff::Tensor, graph: &GraphInput, metric: MazeMetric) -> Result<Option<crate::metrics::IsomorphismReport>> {
    match distance_correlations(latent, &graph.coords, metric) {
        Ok(r) => Ok(Some(r)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn with_iso(report: MetricReport, iso: Option<crate::metrics::IsomorphismReport>) -> MetricReport {
    match iso {
        Some(r) => report.with_isomorphism(r),
        None => report,
    }
}

/// Classification metrics plus latent/grid distance correlations.
fn classification_metrics(
    graph: &GraphInput,
    labels: &[f64],
    params: &ParamVector,
    gcn_cfg: &GcnConfig,
    metric: MazeMetric,
) -> Result<MetricReport> {
    let out = gcn::forward(graph, params, gcn_cfg)?;
    let r = MetricReport::default().with_classification(bce_and_accuracy(out.output.data(), labels)?);
    Ok(with_iso(r, isomorphism(&out.latent, graph, metric)?))
}

#[allow(clippy::too_many_arguments)]
fn classification_entry(
    id: usize,
    label: String,
    seed: Option<u64>,
    graph: &GraphInput,
    labels: &[f64],
    theta: &ParamVector,
    controller: &Controller,
    metric: MazeMetric,
) -> Result<EvalEntry> {
    let adapted = controller.adapted_params(graph, theta)?;
    Ok(EvalEntry {
        id,
        label,
        seed,
        unadapted: classification_metrics(graph, labels, theta, &controller.gcn, metric)?,
        adapted: classification_metrics(graph, labels, &adapted, &controller.gcn, metric)?,
    })
}

fn spatial_input() -> InputOptions {
    InputOptions {
        features: FeatureSet::All,
        normalize_coords: false,
    }
}

fn label_task(slot: usize, m: &BlockedMaze, opts: InputOptions) -> Result<AdaptationTask> {
    Ok(AdaptationTask {
        id: slot,
        graph: GraphInput::from_maze(&m.maze, opts)?,
        target: Target::Labels(bfs_shortest_path(&m.maze)?.labels),
    })
}

fn controller_loss_traces(report: &mut RunReport, key: &str, trace: &LossTrace) {
    report.traces.insert(key.to_string(), trace.total.clone());
}

/// Trains a controller on `train`, optionally resampling tasks each epoch
/// from fresh slots. Returns the controller, trace and every training seed used.
#[allow(clippy::too_many_arguments)]
fn fit_controller(
    config: &ExperimentConfig,
    input: ControllerInput,
    gcn_cfg: GcnConfig,
    theta: &ParamVector,
    n: usize,
    train: &[BlockedMaze],
    opts: InputOptions,
    held_out_seeds: &[u64],
) -> Result<(Controller, LossTrace)> {
    let tasks: Vec<AdaptationTask> = train.iter().map(|m| label_task(m.slot, m, opts)).collect::<Result<_>>()?;
    let controller = Controller::new(
        config.controller.config(input, config.replace_params),
        gcn_cfg,
        n * n,
        config.seeds.controller,
    )?;
    let hyper = config.controller.hyper();
    let m = config.num_tasks;
    let first_fresh = m + config.num_test;
    let resample = config.resample_tasks.then_some(|epoch: usize| -> Result<Vec<AdaptationTask>> {
        let slots: Vec<usize> = (0..m).map(|i| first_fresh + (epoch - 1) * m + i).collect();
        let fresh = blocked_mazes(config, n, &config.block_probs, &slots)?;
        assert_disjoint(&fresh.iter().map(|b| b.seed).collect::<Vec<_>>(), held_out_seeds)?;
        fresh.iter().map(|b| label_task(b.slot, b, opts)).collect()
    });
    train_controller_with(&tasks, theta, controller, &hyper, resample)
}

struct ClassifyPipeline {
    gcn_cfg: GcnConfig,
    theta: ParamVector,
    train_graph: GraphInput,
    train_labels: Vec<f64>,
    gcn_losses: Vec<f64>,
    controller: Controller,
    trace: LossTrace,
    held_out: Vec<BlockedMaze>,
}

fn classify_pipeline(config: &ExperimentConfig, input: ControllerInput) -> Result<ClassifyPipeline> {
    let n = config.maze_size;
    let maze = GridMaze::full(n)?;
    let labels = bfs_shortest_path(&maze)?;
    let train_graph = GraphInput::from_maze(&maze, spatial_input())?;
    let gcn_cfg = GcnConfig::new(SPATIAL_FEATURE_DIM, config.gcn.hidden_dim, 1, GcnMode::Classify)?;
    let trained = gcn::train_first_order(&train_graph, &labels, &gcn_cfg, &gcn_hyper(config))?;

    let m = config.num_tasks;
    let train = blocked_mazes(config, n, &config.block_probs, &(0..m).collect::<Vec<_>>())?;
    let held_out = blocked_mazes(config, n, &config.test_block_probs, &(m..m + config.num_test).collect::<Vec<_>>())?;
    let held_seeds: Vec<u64> = held_out.iter().map(|b| b.seed).collect();
    assert_disjoint(&train.iter().map(|b| b.seed).collect::<Vec<_>>(), &held_seeds)?;

    let (controller, trace) = fit_controller(config, input, gcn_cfg, &trained.params, n, &train, spatial_input(), &held_seeds)?;
    Ok(ClassifyPipeline {
        gcn_cfg,
        theta: trained.params,
        train_graph,
        train_labels: labels.labels,
        gcn_losses: trained.losses,
        controller,
        trace,
        held_out,
    })
}

fn held_out_group(name: &str, p: &ClassifyPipeline, metric: MazeMetric) -> Result<EvalGroup> {
    let entries = p
        .held_out
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let graph = GraphInput::from_maze(&b.maze, spatial_input())?;
            let labels = bfs_shortest_path(&b.maze)?.labels;
            classification_entry(
                k,
                format!("blocked p={}", b.block_prob),
                Some(b.seed),
                &graph,
                &labels,
                &p.theta,
                &p.controller,
                metric,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalGroup::new(name, entries))
}

/// Training-maze diagnostics, base checkpoints and embedding exports shared
/// by the classification experiments.
fn record_pipeline(config: &ExperimentConfig, p: &ClassifyPipeline, report: &mut RunReport, sink: &mut ArtifactSink) -> Result<()> {
    let train = gcn::forward(&p.train_graph, &p.theta, &p.gcn_cfg)?;
    let cls = bce_and_accuracy(train.output.data(), &p.train_labels)?;
    report.summary.insert("gcn_train_accuracy".into(), cls.accuracy);
    report.summary.insert("gcn_train_bce".into(), cls.bce);
    report.traces.insert("gcn".into(), p.gcn_losses.clone());
    controller_loss_traces(report, "controller", &p.trace);

    let iso = distance_correlations(&train.latent, &p.train_graph.coords, config.maze_metric)?;
    let rows: Vec<Vec<f64>> = (0..train.latent.rows()).map(|i| train.latent.row(i).to_vec()).collect();
    let clusters = kmeans(&rows, config.kmeans_k.min(rows.len()), config.seeds.init, KMEANS_MAX_ITERS)?;
    let mut sizes = vec![0; clusters.centroids.len()];
    for &a in &clusters.assignments {
        sizes[a] += 1;
    }
    let projection = linear_projection_2d(&rows)?;
    report.embedding_analysis = Some(EmbeddingAnalysis {
        isomorphism: iso,
        kmeans_k: clusters.centroids.len(),
        kmeans_inertia: clusters.inertia,
        cluster_sizes: sizes,
        assignments: clusters.assignments.clone(),
        projection_eigenvalues: projection.eigenvalues,
        projection_degenerate: projection.degenerate,
    });

    let n = config.maze_size;
    sink.put("embeddings.csv", || embeddings_csv(&train.latent, n))?;
    sink.put("projection.csv", || projection_csv(&projection.coords, &clusters.assignments, n))?;
    sink.put("controller_loss.csv", || p.trace.to_csv())?;
    sink.put("gcn.json", || {
        Checkpoint::Gcn {
            config: p.gcn_cfg,
            params: p.theta.clone(),
        }
        .to_json()
    })?;
    sink.put("controller.json", || {
        Checkpoint::Controller {
            controller: p.controller.clone(),
        }
        .to_json()
    })?;
    Ok(())
}

fn classification_experiment(config: &ExperimentConfig, input: ControllerInput, sink: &mut ArtifactSink) -> Result<RunReport> {
    let p = classify_pipeline(config, input)?;
    let mut report = RunReport::new(config.clone());
    report.groups.push(held_out_group("held_out", &p, config.maze_metric)?);
    record_pipeline(config, &p, &mut report, sink)?;
    Ok(report)
}

/// Enriched controller, with the basic controller on the same seeds for comparison.
fn experiment_2(config: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<RunReport> {
    let enriched = classify_pipeline(config, ControllerInput::Enriched)?;
    let basic = classify_pipeline(config, ControllerInput::Basic)?;
    let mut report = RunReport::new(config.clone());
    report.groups.push(held_out_group("held_out", &enriched, config.maze_metric)?);
    report.groups.push(held_out_group("held_out_basic", &basic, config.maze_metric)?);
    controller_loss_traces(&mut report, "controller_basic", &basic.trace);
    record_pipeline(config, &enriched, &mut report, sink)?;
    Ok(report)
}

/// The experiment-1 pipeline evaluated on held-out mazes with spatial
/// features and on the same mazes with Gaussian features.
fn experiment_4(config: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<RunReport> {
    if config.gaussian_dim != SPATIAL_FEATURE_DIM {
        return Err(contract(format!(
            "gaussian_dim must equal the spatial feature width {SPATIAL_FEATURE_DIM} so the trained network accepts it"
        )));
    }
    let p = classify_pipeline(config, ControllerInput::Basic)?;
    let mut report = RunReport::new(config.clone());
    report.groups.push(held_out_group("isomorphic", &p, config.maze_metric)?);

    let noise: Vec<(EvalEntry, crate::autodiff::Tensor)> = p
        .held_out
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let feature_seed = b.seed ^ 0x9e37_79b9_7f4a_7c15;
            let maze = randomize_features(&b.maze, config.gaussian_dim, feature_seed)?;
            let graph = GraphInput::from_maze(&maze, spatial_input())?;
            let labels = bfs_shortest_path(&maze)?.labels;
            let entry = classification_entry(
                k,
                format!("gaussian p={}", b.block_prob),
                Some(b.seed),
                &graph,
                &labels,
                &p.theta,
                &p.controller,
                config.maze_metric,
            )?;
            let adapted = p.controller.adapted_params(&graph, &p.theta)?;
            Ok((entry, gcn::forward(&graph, &adapted, &p.gcn_cfg)?.latent))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut signed = Vec::new();
    for (k, (entry, latent)) in noise.iter().enumerate() {
        signed.push(entry.adapted.pearson.unwrap_or(0.0));
        sink.put(&format!("embeddings_gaussian_{k}.csv"), || embeddings_csv(latent, config.maze_size))?;
    }
    let group = EvalGroup::new("non_isomorphic", noise.into_iter().map(|(e, _)| e).collect());
    let t = signed.len() as f64;
    report.summary.insert("non_isomorphic_pearson_signed_mean".into(), signed.iter().sum::<f64>() / t);
    report
        .summary
        .insert("non_isomorphic_pearson_abs_mean".into(), signed.iter().map(|r| r.abs()).sum::<f64>() / t);
    report.groups.push(group);
    record_pipeline(config, &p, &mut report, sink)?;
    Ok(report)
}

fn coords_input(config: &ExperimentConfig) -> InputOptions {
    InputOptions {
        features: FeatureSet::Coords,
        normalize_coords: config.cross_size_normalization,
    }
}

fn iso_only(latent: &crate::autodiff::Tensor, graph: &GraphInput, metric: MazeMetric) -> Result<MetricReport> {
    Ok(with_iso(MetricReport::default(), isomorphism(latent, graph, metric)?))
}

/// Distance-preserving training on small mazes, evaluated on larger ones.
fn experiment_3(config: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<RunReport> {
    let mut report = RunReport::new(config.clone());
    let opts = coords_input(config);
    let n_src = config.maze_size;
    let m = config.num_tasks;
    let train_mazes = blocked_mazes(config, n_src, &config.block_probs, &(0..m).collect::<Vec<_>>())?;
    let held_out = blocked_mazes(config, n_src, &config.test_block_probs, &(m..m + config.num_test).collect::<Vec<_>>())?;
    let held_seeds: Vec<u64> = held_out.iter().map(|b| b.seed).collect();
    assert_disjoint(&train_mazes.iter().map(|b| b.seed).collect::<Vec<_>>(), &held_seeds)?;

    for (si, study) in config.studies.iter().enumerate() {
        let tag = format!("study{}", si + 1);
        let graphs: Vec<GraphInput> = study
            .train_sizes
            .iter()
            .map(|&n| GraphInput::from_maze(&GridMaze::full(n)?, opts))
            .collect::<Result<_>>()?;
        let gcn_cfg = GcnConfig::new(2, config.gcn.hidden_dim, 1, GcnMode::DistancePreserve)?;
        let trained = gcn::train_distance_preserving(&graphs, &gcn_cfg, &gcn_hyper(config))?;
        let theta = trained.params;
        report
            .summary
            .insert(format!("{tag}_train_pearson"), gcn::mean_distance_pearson(&graphs, &theta, &gcn_cfg)?);
        report.traces.insert(format!("{tag}_gcn"), trained.losses);

        let tasks: Vec<AdaptationTask> = train_mazes
            .iter()
            .map(|b| {
                let graph = GraphInput::from_maze(&b.maze, opts)?;
                Ok(AdaptationTask {
                    id: b.slot,
                    target: Target::for_graph_distances(&graph)?,
                    graph,
                })
            })
            .collect::<Result<_>>()?;
        let controller = Controller::new(
            config.controller.config(ControllerInput::Basic, config.replace_params),
            gcn_cfg,
            n_src * n_src,
            config.seeds.controller,
        )?;
        let resample = config.resample_tasks.then_some(|epoch: usize| -> Result<Vec<AdaptationTask>> {
            let slots: Vec<usize> = (0..m).map(|i| m + config.num_test + (epoch - 1) * m + i).collect();
            let fresh = blocked_mazes(config, n_src, &config.block_probs, &slots)?;
            assert_disjoint(&fresh.iter().map(|b| b.seed).collect::<Vec<_>>(), &held_seeds)?;
            fresh
                .iter()
                .map(|b| {
                    let graph = GraphInput::from_maze(&b.maze, opts)?;
                    Ok(AdaptationTask {
                        id: b.slot,
                        target: Target::for_graph_distances(&graph)?,
                        graph,
                    })
                })
                .collect()
        });
        let (controller, trace) = train_controller_with(&tasks, &theta, controller, &config.controller.hyper(), resample)?;
        controller_loss_traces(&mut report, &format!("{tag}_controller"), &trace);

        // the controller only accepts source-size inputs, so larger mazes
        // reuse the update computed on the unblocked source maze
        let source = GraphInput::from_maze(&GridMaze::full(n_src)?, opts)?;
        let theta_src = controller.adapted_params(&source, &theta)?;
        let entries = study
            .eval_sizes
            .par_iter()
            .map(|&n| {
                let g = GraphInput::from_maze(&GridMaze::full(n)?, opts)?;
                Ok(EvalEntry {
                    id: n,
                    label: format!("{n}x{n}"),
                    seed: None,
                    unadapted: iso_only(&gcn::forward(&g, &theta, &gcn_cfg)?.latent, &g, config.maze_metric)?,
                    adapted: iso_only(&gcn::forward(&g, &theta_src, &gcn_cfg)?.latent, &g, config.maze_metric)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        report.groups.push(EvalGroup::new(tag.clone(), entries));

        let blocked = held_out
            .par_iter()
            .enumerate()
            .map(|(k, b)| {
                let g = GraphInput::from_maze(&b.maze, opts)?;
                let adapted = controller.adapted_params(&g, &theta)?;
                Ok(EvalEntry {
                    id: k,
                    label: format!("blocked {n_src}x{n_src} p={}", b.block_prob),
                    seed: Some(b.seed),
                    unadapted: iso_only(&gcn::forward(&g, &theta, &gcn_cfg)?.latent, &g, config.maze_metric)?,
                    adapted: iso_only(&gcn::forward(&g, &adapted, &gcn_cfg)?.latent, &g, config.maze_metric)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        report.groups.push(EvalGroup::new(format!("{tag}_blocked"), blocked));

        if si == 0 {
            let latent = gcn::forward(&source, &theta, &gcn_cfg)?.latent;
            sink.put("embeddings.csv", || embeddings_csv(&latent, n_src))?;
            sink.put("controller_loss.csv", || trace.to_csv())?;
        }
        sink.put(&format!("{tag}_gcn.json"), || {
            Checkpoint::Gcn {
                config: gcn_cfg,
                params: theta.clone(),
            }
            .to_json()
        })?;
        sink.put(&format!("{tag}_controller.json"), || {
            Checkpoint::Controller {
                controller: controller.clone(),
            }
            .to_json()
        })?;
    }
    Ok(report)
}

fn value_task(slot: usize, mask: &RewardMask, maze: &GridMaze) -> Result<AdaptationTask> {
    Ok(AdaptationTask {
        id: slot,
        graph: GraphInput::for_rewards(mask, maze)?,
        target: Target::Values(dp_value(mask).values),
    })
}

fn value_metrics(graph: &GraphInput, mask: &RewardMask, params: &ParamVector, gcn_cfg: &GcnConfig) -> Result<MetricReport> {
    let table = dp_value(mask);
    let pred = gcn::forward(graph, params, gcn_cfg)?.output;
    let mut r = MetricReport::default().with_regression(regression_report(pred.data(), &table.values)?);
    r.policy_accuracy = Some(policy_accuracy(pred.data(), &optimal_policy(&table))?);
    Ok(r)
}

/// Masks for slots, each paired with the graph the value network runs on.
fn value_slots(config: &ExperimentConfig, q: f64, slots: &[usize]) -> Result<Vec<(usize, u64, RewardMask, GridMaze)>> {
    let n = config.maze_size;
    slots
        .par_iter()
        .map(|&slot| {
            let seed = slot_seed(config.seeds.maze, slot);
            let mask = sample_reward_mask(n, q, seed)?;
            let maze = if config.value_graph_block_prob > 0.0 {
                create_maze_graph_seeded(n, config.value_graph_block_prob, seed, config.require_connected)?.0
            } else {
                GridMaze::full(n)?
            };
            Ok((slot, seed, mask, maze))
        })
        .collect()
}

/// Value regression on the unmasked grid, adapted to sign-flipped reward masks.
fn experiment_5(config: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<RunReport> {
    let n = config.maze_size;
    let grid = GridMaze::full(n)?;
    let ones = RewardMask::ones(n);
    let table = dp_value(&ones);
    let graph = GraphInput::for_rewards(&ones, &grid)?;
    let gcn_cfg = GcnConfig::new(SPATIAL_FEATURE_DIM, config.gcn.hidden_dim, 1, GcnMode::Regress)?;
    let trained = gcn::train_value_regressor(&graph, &table, &gcn_cfg, &gcn_hyper(config))?;
    let theta = trained.params;

    let mut report = RunReport::new(config.clone());
    let base = value_metrics(&graph, &ones, &theta, &gcn_cfg)?;
    report.summary.insert("gcn_train_mse".into(), base.mse.unwrap_or(f64::NAN));
    report.summary.insert("gcn_train_r2".into(), base.r2.unwrap_or(f64::NAN));
    report.traces.insert("gcn".into(), trained.losses);

    let m = config.num_tasks;
    let q = config.mask_flip_prob;
    let train = value_slots(config, q, &(0..m).collect::<Vec<_>>())?;
    let held_out = value_slots(config, q, &(m..m + config.num_test).collect::<Vec<_>>())?;
    let held_seeds: Vec<u64> = held_out.iter().map(|t| t.1).collect();
    assert_disjoint(&train.iter().map(|t| t.1).collect::<Vec<_>>(), &held_seeds)?;

    let tasks: Vec<AdaptationTask> = train.iter().map(|(s, _, mask, g)| value_task(*s, mask, g)).collect::<Result<_>>()?;
    let controller = Controller::new(
        config.controller.config(ControllerInput::Basic, config.replace_params),
        gcn_cfg,
        n * n,
        config.seeds.controller,
    )?;
    let resample = config.resample_tasks.then_some(|epoch: usize| -> Result<Vec<AdaptationTask>> {
        let slots: Vec<usize> = (0..m).map(|i| m + config.num_test + (epoch - 1) * m + i).collect();
        let fresh = value_slots(config, q, &slots)?;
        assert_disjoint(&fresh.iter().map(|t| t.1).collect::<Vec<_>>(), &held_seeds)?;
        fresh.iter().map(|(s, _, mask, g)| value_task(*s, mask, g)).collect()
    });
    let (controller, trace) = train_controller_with(&tasks, &theta, controller, &config.controller.hyper(), resample)?;
    controller_loss_traces(&mut report, "controller", &trace);

    let eval = |id: usize, label: String, seed: Option<u64>, mask: &RewardMask, g: &GridMaze| -> Result<EvalEntry> {
        let graph = GraphInput::for_rewards(mask, g)?;
        let adapted = crate::controller::adapt_value(&controller, &graph, &theta)?;
        Ok(EvalEntry {
            id,
            label,
            seed,
            unadapted: value_metrics(&graph, mask, &theta, &gcn_cfg)?,
            adapted: value_metrics(&graph, mask, &adapted, &gcn_cfg)?,
        })
    };
    let entries = held_out
        .par_iter()
        .enumerate()
        .map(|(k, (_, seed, mask, g))| eval(k, format!("mask q={q}"), Some(*seed), mask, g))
        .collect::<Result<Vec<_>>>()?;
    report.groups.push(EvalGroup::new("held_out", entries));
    report
        .groups
        .push(EvalGroup::new("unmasked", vec![eval(0, "mask q=0".into(), None, &ones, &grid)?]));

    let latent = gcn::forward(&graph, &theta, &gcn_cfg)?.latent;
    sink.put("embeddings.csv", || embeddings_csv(&latent, n))?;
    sink.put("controller_loss.csv", || trace.to_csv())?;
    sink.put("values.csv", || values_csv(&table))?;
    sink.put("gcn.json", || {
        Checkpoint::Gcn {
            config: gcn_cfg,
            params: theta.clone(),
        }
        .to_json()
    })?;
    sink.put("controller.json", || Checkpoint::Controller { controller: controller.clone() }.to_json())?;
    Ok(report)
}
