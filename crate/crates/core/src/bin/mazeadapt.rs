//! `mazeadapt`: maze generation, training, evaluation and experiment runs.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use mazeadapt::controller::{train_controller, AdaptationTask, Controller, ControllerInput};
use mazeadapt::gcn::{self, GcnConfig, GcnMode, GraphInput, InputOptions, Target, TrainHyper};
use mazeadapt::harness::{blocked_mazes, embeddings_csv, run_experiment, Checkpoint, ExperimentConfig};
use mazeadapt::maze::{apply_feature_mode, create_maze_graph, FeatureMode, GridMaze, RewardMask, SPATIAL_FEATURE_DIM};
use mazeadapt::metrics::{bce_and_accuracy, MetricReport};
use mazeadapt::oracle::{bfs_shortest_path, dp_value};

#[derive(Parser)]
#[command(name = "mazeadapt", version, about = "GCN maze learning with hypernetwork adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Classify,
    Regress,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a blocked maze and write it as JSON.
    GenMaze {
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0.0)]
        block_prob: f64,
        #[arg(long)]
        seed: u64,
        /// Replace spatial features with this many Gaussian features.
        #[arg(long)]
        gaussian_dim: Option<usize>,
        /// Keep the maze even if the goal is unreachable.
        #[arg(long)]
        allow_disconnected: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a GCN on one maze (shortest-path labels or DP values).
    TrainGcn {
        #[arg(long)]
        maze: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Classify)]
        mode: Mode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a controller for a classification GCN on freshly generated blocked mazes.
    TrainController {
        #[arg(long)]
        gcn: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        tasks: Option<usize>,
        #[arg(long)]
        enriched: bool,
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV (`epoch,total_loss,task_…`).
        #[arg(long)]
        loss_out: Option<PathBuf>,
    },
    /// Classification metrics on a maze, unadapted and (with a controller) adapted.
    Eval {
        #[arg(long)]
        gcn: PathBuf,
        #[arg(long)]
        maze: PathBuf,
        #[arg(long)]
        controller: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment and write report.json plus artifacts into a directory.
    Exp {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        id: u8,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write layer-1 embeddings of a GCN on a maze as CSV.
    ExportEmbeddings {
        #[arg(long)]
        gcn: PathBuf,
        #[arg(long)]
        maze: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_maze(path: &Path) -> anyhow::Result<GridMaze> {
    GridMaze::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_config(path: Option<&Path>, id: u8, seed: u64) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_json(&read(p)?, Some(id), seed).with_context(|| format!("config {}", p.display()))?,
        None => ExperimentConfig::for_experiment(id, seed)?,
    };
    // an explicit --seed always wins over seeds stored in the file
    cfg.seeds = mazeadapt::harness::Seeds::from_master(seed);
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenMaze {
            size,
            block_prob,
            seed,
            gaussian_dim,
            allow_disconnected,
            out,
        } => {
            let mut maze = create_maze_graph(size, block_prob, seed, !allow_disconnected)?;
            if let Some(dim) = gaussian_dim {
                maze = apply_feature_mode(&maze, FeatureMode::GaussianNoise { dim, seed })?;
            }
            write(&out, &maze.to_json_pretty())
        }
        Command::TrainGcn {
            maze,
            mode,
            config,
            seed,
            epochs,
            lr,
            out,
        } => {
            let maze = load_maze(&maze)?;
            let id = match mode {
                Mode::Classify => 1,
                Mode::Regress => 5,
            };
            let cfg = load_config(config.as_deref(), id, seed)?;
            let hyper = TrainHyper {
                lr: lr.unwrap_or(cfg.gcn.lr),
                epochs: epochs.unwrap_or(cfg.gcn.epochs),
                momentum: cfg.gcn.momentum,
                seed: cfg.seeds.init,
            };
            let (config, trained) = match mode {
                Mode::Classify => {
                    let c = GcnConfig::new(maze.feature_dim(), cfg.gcn.hidden_dim, 1, GcnMode::Classify)?;
                    let g = GraphInput::from_maze(&maze, InputOptions::default())?;
                    (c, gcn::train_first_order(&g, &bfs_shortest_path(&maze)?, &c, &hyper)?)
                }
                Mode::Regress => {
                    let c = GcnConfig::new(SPATIAL_FEATURE_DIM, cfg.gcn.hidden_dim, 1, GcnMode::Regress)?;
                    let ones = RewardMask::ones(maze.n());
                    let g = GraphInput::for_rewards(&ones, &maze)?;
                    (c, gcn::train_value_regressor(&g, &dp_value(&ones), &c, &hyper)?)
                }
            };
            write(
                &out,
                &Checkpoint::Gcn {
                    config,
                    params: trained.params,
                }
                .to_json(),
            )
        }
        Command::TrainController {
            gcn,
            config,
            seed,
            tasks,
            enriched,
            out,
            loss_out,
        } => {
            let (gcn_cfg, theta) = Checkpoint::from_json(&read(&gcn)?)?.into_gcn()?;
            if gcn_cfg.mode != GcnMode::Classify || gcn_cfg.input_dim != SPATIAL_FEATURE_DIM {
                bail!("train-controller expects a classification GCN on spatial features");
            }
            let mut cfg = load_config(config.as_deref(), 1, seed)?;
            if let Some(m) = tasks {
                cfg.num_tasks = m;
            }
            cfg.validate()?;
            let n = cfg.maze_size;
            let slots: Vec<usize> = (0..cfg.num_tasks).collect();
            let task_set = blocked_mazes(&cfg, n, &cfg.block_probs, &slots)?
                .iter()
                .map(|b| {
                    Ok(AdaptationTask {
                        id: b.slot,
                        graph: GraphInput::from_maze(&b.maze, InputOptions::default())?,
                        target: Target::Labels(bfs_shortest_path(&b.maze)?.labels),
                    })
                })
                .collect::<mazeadapt::Result<Vec<_>>>()?;
            let input = if enriched {
                ControllerInput::Enriched
            } else {
                ControllerInput::Basic
            };
            let controller = Controller::new(cfg.controller.config(input, cfg.replace_params), gcn_cfg, n * n, cfg.seeds.controller)?;
            let (controller, trace) = train_controller(&task_set, &theta, controller, &cfg.controller.hyper())?;
            if let Some(p) = loss_out {
                write(&p, &trace.to_csv())?;
            }
            write(&out, &Checkpoint::Controller { controller }.to_json())
        }
        Command::Eval {
            gcn,
            maze,
            controller,
            out,
        } => {
            let (gcn_cfg, theta) = Checkpoint::from_json(&read(&gcn)?)?.into_gcn()?;
            if gcn_cfg.mode != GcnMode::Classify {
                bail!("eval expects a classification GCN");
            }
            let maze = load_maze(&maze)?;
            let graph = GraphInput::from_maze(&maze, InputOptions::default())?;
            let labels = bfs_shortest_path(&maze)?.labels;
            let score = |params| -> anyhow::Result<MetricReport> {
                let y = gcn::forward(&graph, params, &gcn_cfg)?.output;
                Ok(MetricReport::default().with_classification(bce_and_accuracy(y.data(), &labels)?))
            };
            let mut result = serde_json::Map::new();
            result.insert("unadapted".into(), serde_json::to_value(score(&theta)?)?);
            if let Some(c) = controller {
                let c = Checkpoint::from_json(&read(&c)?)?.into_controller()?;
                let adapted = c.adapted_params(&graph, &theta)?;
                result.insert("adapted".into(), serde_json::to_value(score(&adapted)?)?);
            }
            let text = serde_json::to_string_pretty(&result)?;
            match out {
                Some(p) => write(&p, &text),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
        Command::Exp { id, config, seed, out } => {
            let cfg = load_config(config.as_deref(), id, seed)?;
            let report = run_experiment(&cfg, Some(&out))?;
            write(&out.join("report.json"), &report.to_json_pretty())
        }
        Command::ExportEmbeddings { gcn, maze, out } => {
            let (gcn_cfg, theta) = Checkpoint::from_json(&read(&gcn)?)?.into_gcn()?;
            let maze = load_maze(&maze)?;
            let graph = match gcn_cfg.mode {
                GcnMode::Regress => GraphInput::for_rewards(&RewardMask::ones(maze.n()), &maze)?,
                GcnMode::Classify => GraphInput::from_maze(&maze, InputOptions::default())?,
                GcnMode::DistancePreserve => GraphInput::from_maze(
                    &maze,
                    InputOptions {
                        features: gcn::FeatureSet::Coords,
                        normalize_coords: true,
                    },
                )?,
            };
            let latent = gcn::forward(&graph, &theta, &gcn_cfg)?.latent;
            write(&out, &embeddings_csv(&latent, maze.n()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
