use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::controller::{ControllerConfig, ControllerHyper, ControllerInput};
use crate::error::{contract, Error, Result};
use crate::maze::rng_for;
use crate::metrics::MazeMetric;

/// Seeds for the three independent random streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub maze: u64,
    pub init: u64,
    pub controller: u64,
}

impl Seeds {
    /// Derives all three seeds from one master seed.
    pub fn from_master(master: u64) -> Self {
        let mut rng = rng_for(master);
        Self {
            maze: rng.next_u64() >> 16,
            init: rng.next_u64(),
            controller: rng.next_u64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcnSettings {
    pub hidden_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSettings {
    pub hidden: Vec<usize>,
    pub delta_scale: f64,
    pub output_input_scale: f64,
    pub lr: f64,
    pub epochs: usize,
    pub momentum: f64,
}

impl ControllerSettings {
    pub fn config(&self, input: ControllerInput, replace_params: bool) -> ControllerConfig {
        ControllerConfig {
            input,
            hidden: self.hidden.clone(),
            delta_scale: self.delta_scale,
            output_input_scale: self.output_input_scale,
            replace_params,
        }
    }

    pub fn hyper(&self) -> ControllerHyper {
        ControllerHyper {
            lr: self.lr,
            epochs: self.epochs,
            momentum: self.momentum,
        }
    }
}

/// One cross-size study: train on `train_sizes`, evaluate on strictly larger `eval_sizes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeStudy {
    pub train_sizes: Vec<usize>,
    pub eval_sizes: Vec<usize>,
}

/// Everything that determines a run. Serialized verbatim into its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: u8,
    pub maze_size: usize,
    /// Experiment 3 only.
    pub studies: Vec<SizeStudy>,
    /// Cycled over the controller's training tasks.
    pub block_probs: Vec<f64>,
    /// Cycled over the held-out mazes.
    pub test_block_probs: Vec<f64>,
    pub num_tasks: usize,
    pub num_test: usize,
    pub seeds: Seeds,
    pub gcn: GcnSettings,
    pub controller: ControllerSettings,
    pub require_connected: bool,
    pub replace_params: bool,
    pub maze_metric: MazeMetric,
    pub cross_size_normalization: bool,
    pub resample_tasks: bool,
    /// Reward-mask flip probability (experiment 5).
    pub mask_flip_prob: f64,
    /// Experiment 5 runs on the full grid when zero; otherwise each task's
    /// graph is blocked with this probability (rewards still follow the
    /// Down/Right recursion).
    pub value_graph_block_prob: f64,
    /// Width of Gaussian replacement features (experiment 4).
    pub gaussian_dim: usize,
    pub kmeans_k: usize,
}

impl ExperimentConfig {
    /// Calibrated defaults for experiment `id`, seeded from `master_seed`.
    pub fn for_experiment(id: u8, master_seed: u64) -> Result<Self> {
        if !(1..=5).contains(&id) {
            return Err(contract(format!("experiment id must be 1..=5, got {id}")));
        }
        let mut cfg = Self {
            id,
            maze_size: 10,
            studies: Vec::new(),
            block_probs: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            test_block_probs: vec![0.3, 0.4, 0.5],
            num_tasks: 10,
            num_test: 3,
            seeds: Seeds::from_master(master_seed),
            gcn: GcnSettings {
                hidden_dim: 32,
                lr: 0.01,
                epochs: 600,
                momentum: 0.9,
            },
            controller: ControllerSettings {
                hidden: vec![64, 64],
                delta_scale: 1.0,
                output_input_scale: 1.0,
                lr: 0.001,
                epochs: 200,
                momentum: 0.9,
            },
            require_connected: true,
            replace_params: false,
            maze_metric: MazeMetric::Euclidean,
            cross_size_normalization: false,
            resample_tasks: false,
            mask_flip_prob: 0.3,
            value_graph_block_prob: 0.0,
            gaussian_dim: 5,
            kmeans_k: 4,
        };
        match id {
            3 => {
                cfg.maze_size = 8;
                cfg.studies = vec![
                    SizeStudy {
                        train_sizes: vec![8],
                        eval_sizes: vec![10, 12, 14],
                    },
                    SizeStudy {
                        train_sizes: vec![8, 10],
                        eval_sizes: vec![12, 14],
                    },
                ];
                cfg.block_probs = vec![0.1, 0.2, 0.3];
                cfg.test_block_probs = vec![0.1, 0.2, 0.3];
                cfg.cross_size_normalization = true;
            }
            5 => {
                cfg.require_connected = false;
                // value targets reach ~170, so steps are smaller and the
                // controller sees predicted values rescaled toward unit size
                cfg.gcn.lr = 1e-4;
                cfg.gcn.epochs = 2000;
                cfg.controller.lr = 1e-6;
                cfg.controller.output_input_scale = 0.01;
            }
            _ => {}
        }
        Ok(cfg)
    }

    /// Parses a (possibly partial) JSON config. Missing fields take the
    /// defaults of the experiment named by `id` (or `id_override`).
    pub fn from_json(text: &str, id_override: Option<u8>, master_seed: u64) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            offset: 0,
            path: ".".into(),
            message: e.to_string(),
        })?;
        let Value::Object(user) = user else {
            return Err(Error::Parse {
                offset: 0,
                path: ".".into(),
                message: "config must be a JSON object".into(),
            });
        };
        let id = match id_override {
            Some(id) => id,
            None => user
                .get("id")
                .and_then(Value::as_u64)
                .ok_or_else(|| contract("config has no experiment id; pass one explicitly"))? as u8,
        };
        let mut merged = serde_json::to_value(Self::for_experiment(id, master_seed)?).expect("config serializes");
        merge(&mut merged, Value::Object(user));
        merged["id"] = Value::from(id);
        let cfg: Self = serde_path_to_error::deserialize(merged).map_err(|e| Error::Parse {
            offset: 0,
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.id) {
            return Err(contract(format!("experiment id must be 1..=5, got {}", self.id)));
        }
        if self.num_tasks == 0 {
            return Err(contract("num_tasks must be ≥ 1"));
        }
        if self.num_test == 0 {
            return Err(contract("num_test must be ≥ 1"));
        }
        if self.maze_size < 2 {
            return Err(contract("maze_size must be ≥ 2"));
        }
        for (name, probs) in [("block_probs", &self.block_probs), ("test_block_probs", &self.test_block_probs)] {
            if probs.is_empty() || probs.iter().any(|p| !(0.0..1.0).contains(p)) {
                return Err(contract(format!("{name} must be non-empty with entries in [0, 1)")));
            }
        }
        if !(0.0..1.0).contains(&self.value_graph_block_prob) {
            return Err(contract("value_graph_block_prob must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.mask_flip_prob) {
            return Err(contract("mask_flip_prob must lie in [0, 1]"));
        }
        if self.gcn.hidden_dim == 0 || self.gaussian_dim == 0 || self.kmeans_k == 0 {
            return Err(contract("hidden_dim, gaussian_dim and kmeans_k must be ≥ 1"));
        }
        if self.id == 3 {
            if self.studies.is_empty() {
                return Err(contract("experiment 3 needs at least one size study"));
            }
            for s in &self.studies {
                let max_train = s.train_sizes.iter().copied().max().ok_or_else(|| contract("empty train_sizes"))?;
                if s.train_sizes.iter().any(|&n| n < 2) {
                    return Err(contract("training sizes must be ≥ 2"));
                }
                if s.eval_sizes.is_empty() || s.eval_sizes.iter().any(|&n| n <= max_train) {
                    return Err(contract("evaluation sizes must be strictly larger than every training size"));
                }
            }
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `base` (objects merge, other values replace).
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
