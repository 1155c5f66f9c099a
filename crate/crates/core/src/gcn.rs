//! Two-layer graph convolutional network over a dense propagation matrix.
//!
//! `Z = ReLU(Â·X·W1 + b1)` is the latent embedding and `Â·Z·W2 + b2` the
//! logits; classification applies a per-node sigmoid. All parameters live
//! in one flat [`ParamVector`] so a hypernetwork can emit a delta for them.

use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot_uniform, segment_vars, ParamLayout, ParamVector, Sgd, SgdConfig, Tape, Tensor, Var};
use crate::error::{contract, Error, Result};
use crate::maze::{rng_for, FeatureKind, GridMaze, RewardMask};
use crate::metrics::pearson;
use crate::oracle::{PathLabels, ValueTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GcnMode {
    Classify,
    Regress,
    DistancePreserve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub mode: GcnMode,
}

impl GcnConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize, mode: GcnMode) -> Result<Self> {
        let c = Self {
            input_dim,
            hidden_dim,
            output_dim,
            mode,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(contract("GCN dimensions must be ≥ 1"));
        }
        if self.mode == GcnMode::Classify && self.output_dim != 1 {
            return Err(contract("classification GCN has output_dim 1"));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&[
            ("w1", vec![self.input_dim, self.hidden_dim]),
            ("b1", vec![self.hidden_dim]),
            ("w2", vec![self.hidden_dim, self.output_dim]),
            ("b2", vec![self.output_dim]),
        ])
    }

    pub fn num_params(&self) -> usize {
        self.input_dim * self.hidden_dim + self.hidden_dim + self.hidden_dim * self.output_dim + self.output_dim
    }
}

/// Glorot-uniform weights and zero biases.
pub fn init_params(config: &GcnConfig, seed: u64) -> ParamVector {
    let mut rng = rng_for(seed);
    let w1 = glorot_uniform(&mut rng, config.input_dim, config.hidden_dim);
    let w2 = glorot_uniform(&mut rng, config.hidden_dim, config.output_dim);
    ParamVector::flatten(
        config.layout(),
        &[
            w1,
            Tensor::zeros(&[config.hidden_dim]),
            w2,
            Tensor::zeros(&[config.output_dim]),
        ],
    )
    .expect("layout matches shapes")
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` over the given undirected edges.
pub fn build_propagation_matrix(num_nodes: usize, edges: &[(usize, usize)]) -> Tensor {
    let mut deg = vec![1.0f64; num_nodes];
    for &(u, v) in edges {
        deg[u] += 1.0;
        deg[v] += 1.0;
    }
    let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut a = Tensor::zeros(&[num_nodes, num_nodes]);
    let data = a.data_mut();
    for i in 0..num_nodes {
        data[i * num_nodes + i] = inv[i] * inv[i];
    }
    for &(u, v) in edges {
        let w = inv[u] * inv[v];
        data[u * num_nodes + v] = w;
        data[v * num_nodes + u] = w;
    }
    a
}

/// Which feature columns the network sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Every stored feature column.
    #[default]
    All,
    /// Only the `(x, y)` coordinate columns.
    Coords,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InputOptions {
    pub features: FeatureSet,
    /// Divide coordinate columns by `n − 1` so inputs are size independent.
    pub normalize_coords: bool,
}

/// A maze prepared for the network: propagation matrix, feature matrix,
/// their product and the node coordinates.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub n: usize,
    pub propagation: Tensor,
    pub features: Tensor,
    /// `Â·X`, constant for a given maze.
    pub propagated_features: Tensor,
    pub coords: Vec<[f64; 2]>,
}

impl GraphInput {
    pub fn new(n: usize, propagation: Tensor, features: Tensor) -> Result<Self> {
        let nn = n * n;
        if propagation.shape() != [nn, nn] || features.rows() != nn || features.shape().len() != 2 {
            return Err(Error::Dimension {
                op: "graph_input",
                lhs: propagation.shape().to_vec(),
                rhs: features.shape().to_vec(),
            });
        }
        let propagated_features = propagation.matmul(&features)?;
        let coords = (0..nn).map(|v| [(v % n) as f64, (v / n) as f64]).collect();
        Ok(Self {
            n,
            propagation,
            features,
            propagated_features,
            coords,
        })
    }

    pub fn from_maze(maze: &GridMaze, opts: InputOptions) -> Result<Self> {
        let n = maze.n();
        let scale = if opts.normalize_coords && n > 1 {
            1.0 / (n - 1) as f64
        } else {
            1.0
        };
        let spatial = maze.feature_kind() == FeatureKind::Spatial;
        let rows: Vec<Vec<f64>> = maze
            .features()
            .iter()
            .map(|f| {
                let mut row: Vec<f64> = match opts.features {
                    FeatureSet::All => f.clone(),
                    FeatureSet::Coords => f[..2.min(f.len())].to_vec(),
                };
                if spatial {
                    for v in row.iter_mut().take(2) {
                        *v *= scale;
                    }
                }
                row
            })
            .collect();
        let a = build_propagation_matrix(maze.num_nodes(), maze.edges());
        Self::new(n, a, Tensor::from_rows(&rows)?)
    }

    /// Value-task input on `maze`'s graph: `[x, y, R(y, x), original_degree,
    /// current_degree]`, where the reward takes the slot the blockage count
    /// occupies in spatial features.
    pub fn for_rewards(mask: &RewardMask, maze: &GridMaze) -> Result<Self> {
        if mask.n() != maze.n() {
            return Err(contract("mask and maze sizes differ"));
        }
        let rewards = mask.rewards();
        let rows: Vec<Vec<f64>> = maze
            .features()
            .iter()
            .enumerate()
            .map(|(v, f)| vec![f[0], f[1], rewards[v], f[3], f[4]])
            .collect();
        let a = build_propagation_matrix(maze.num_nodes(), maze.edges());
        Self::new(maze.n(), a, Tensor::from_rows(&rows)?)
    }

    pub fn num_nodes(&self) -> usize {
        self.n * self.n
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Pairwise coordinate distances (upper triangle), normalised to unit mean.
    pub fn normalized_grid_distances(&self) -> Result<Vec<f64>> {
        let d = crate::metrics::pairwise_euclidean(&self.coords.iter().map(|c| c.to_vec()).collect::<Vec<_>>());
        normalize_unit_mean(d)
    }
}

fn normalize_unit_mean(d: Vec<f64>) -> Result<Vec<f64>> {
    if d.is_empty() {
        return Err(Error::Degenerate("fewer than two nodes: no pairwise distances".into()));
    }
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    if mean <= 0.0 {
        return Err(Error::Degenerate("all pairwise distances are zero".into()));
    }
    Ok(d.into_iter().map(|v| v / mean).collect())
}

/// Tape handles for a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct GcnVars {
    /// Per-node prediction (probability for classification).
    pub output: Var,
    pub latent: Var,
}

/// Records a forward pass with the flat parameter variable `theta`.
pub fn forward_on_tape(tape: &mut Tape, graph: &GraphInput, theta: Var, config: &GcnConfig) -> Result<GcnVars> {
    if graph.feature_dim() != config.input_dim {
        return Err(contract(format!(
            "feature width {} does not match GCN input_dim {}",
            graph.feature_dim(),
            config.input_dim
        )));
    }
    let seg = segment_vars(tape, theta, &config.layout())?;
    let (w1, b1, w2, b2) = (seg[0], seg[1], seg[2], seg[3]);
    let ax = tape.constant(graph.propagated_features.clone());
    let a = tape.constant(graph.propagation.clone());
    let h = tape.matmul(ax, w1)?;
    let h = tape.add_row(h, b1)?;
    let latent = tape.relu(h)?;
    let az = tape.matmul(a, latent)?;
    let logits = tape.matmul(az, w2)?;
    let logits = tape.add_row(logits, b2)?;
    let output = match config.mode {
        GcnMode::Classify => tape.sigmoid(logits)?,
        GcnMode::Regress | GcnMode::DistancePreserve => logits,
    };
    Ok(GcnVars { output, latent })
}

/// Training target for one graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Labels(Vec<f64>),
    Values(Vec<f64>),
    /// Unit-mean-normalised grid distances.
    Distances(Vec<f64>),
}

impl Target {
    pub fn for_graph_distances(graph: &GraphInput) -> Result<Self> {
        Ok(Self::Distances(graph.normalized_grid_distances()?))
    }
}

/// Records the loss of a forward pass against `target`.
pub fn loss_on_tape(tape: &mut Tape, vars: GcnVars, target: &Target) -> Result<Var> {
    match target {
        Target::Labels(y) => tape.bce(vars.output, y),
        Target::Values(v) => tape.mse(vars.output, v),
        Target::Distances(d) => distance_loss(tape, vars.latent, d),
    }
}

/// Mean squared gap between unit-mean latent distances and `target`.
pub fn distance_loss(tape: &mut Tape, latent: Var, target: &[f64]) -> Result<Var> {
    if tape.value(latent).rows() < 2 {
        return Err(Error::Degenerate("fewer than two nodes: no pairwise distances".into()));
    }
    let d = tape.pairwise_distances(latent)?;
    let m = tape.mean(d)?;
    let dn = tape.div_scalar(d, m)?;
    tape.mse(dn, target)
}

#[derive(Debug, Clone)]
pub struct GcnOutput {
    pub output: Tensor,
    pub latent: Tensor,
}

pub fn forward(graph: &GraphInput, params: &ParamVector, config: &GcnConfig) -> Result<GcnOutput> {
    if params.layout != config.layout() {
        return Err(contract("parameter layout does not match GCN config"));
    }
    let mut tape = Tape::new();
    let theta = tape.constant(params.as_tensor());
    let vars = forward_on_tape(&mut tape, graph, theta, config)?;
    Ok(GcnOutput {
        output: tape.value(vars.output).clone(),
        latent: tape.value(vars.latent).clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    #[serde(default)]
    pub momentum: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: ParamVector,
    /// Total loss before each update.
    pub losses: Vec<f64>,
}

fn map_divergence(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric { .. } => Error::Divergence {
            epoch,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// Full-batch gradient descent on the summed loss over `(graph, target)` pairs,
/// starting from `init`.
pub fn train_from(
    data: &[(&GraphInput, Target)],
    config: &GcnConfig,
    init: ParamVector,
    lr: f64,
    epochs: usize,
    momentum: f64,
    mut on_epoch: impl FnMut(usize, &ParamVector),
) -> Result<Trained> {
    config.validate()?;
    if data.is_empty() {
        return Err(contract("no training graphs"));
    }
    let mut opt = Sgd::new(SgdConfig { lr, momentum });
    let mut params = init;
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut tape = Tape::new();
        let theta = tape.param(params.as_tensor());
        let mut total: Option<Var> = None;
        for (graph, target) in data {
            let vars = forward_on_tape(&mut tape, graph, theta, config).map_err(map_divergence(epoch))?;
            let l = loss_on_tape(&mut tape, vars, target).map_err(map_divergence(epoch))?;
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l)?,
            });
        }
        let total = total.expect("non-empty data");
        let loss = tape.value(total).item()?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        losses.push(loss);
        let mut grads = tape.backward(total)?;
        let g = grads.take(theta).expect("theta gradient");
        params = opt.step(&params, &params.with_data(g.into_data())?)?;
        on_epoch(epoch, &params);
    }
    Ok(Trained { params, losses })
}

/// Shortest-path node classification with BCE.
pub fn train_first_order(graph: &GraphInput, labels: &PathLabels, config: &GcnConfig, hyper: &TrainHyper) -> Result<Trained> {
    if config.mode != GcnMode::Classify {
        return Err(contract("train_first_order needs a Classify config"));
    }
    train_from(
        &[(graph, Target::Labels(labels.labels.clone()))],
        config,
        init_params(config, hyper.seed),
        hyper.lr,
        hyper.epochs,
        hyper.momentum,
        |_, _| {},
    )
}

/// DP value regression with MSE.
pub fn train_value_regressor(graph: &GraphInput, values: &ValueTable, config: &GcnConfig, hyper: &TrainHyper) -> Result<Trained> {
    if config.mode != GcnMode::Regress || config.output_dim != 1 {
        return Err(contract("train_value_regressor needs a Regress config with output_dim 1"));
    }
    if values.values.len() != graph.num_nodes() {
        return Err(contract("value table and graph sizes differ"));
    }
    train_from(
        &[(graph, Target::Values(values.values.clone()))],
        config,
        init_params(config, hyper.seed),
        hyper.lr,
        hyper.epochs,
        hyper.momentum,
        |_, _| {},
    )
}

/// Mean Pearson correlation between latent and grid distances over graphs.
pub fn mean_distance_pearson(graphs: &[GraphInput], params: &ParamVector, config: &GcnConfig) -> Result<f64> {
    let mut total = 0.0;
    for g in graphs {
        let out = forward(g, params, config)?;
        let rows: Vec<Vec<f64>> = (0..out.latent.rows()).map(|i| out.latent.row(i).to_vec()).collect();
        let dz = crate::metrics::pairwise_euclidean(&rows);
        let dm = crate::metrics::pairwise_euclidean(&g.coords.iter().map(|c| c.to_vec()).collect::<Vec<_>>());
        total += pearson(&dz, &dm).unwrap_or(0.0);
    }
    Ok(total / graphs.len() as f64)
}

/// How often [`train_distance_preserving`] scores the training graphs.
pub const DISTANCE_EVAL_EVERY: usize = 10;

/// Trains the latent layer so its pairwise distances match grid distances,
/// summing the loss over `graphs`. Returns the parameters with the best
/// mean training Pearson correlation seen during training.
pub fn train_distance_preserving(graphs: &[GraphInput], config: &GcnConfig, hyper: &TrainHyper) -> Result<Trained> {
    if config.mode != GcnMode::DistancePreserve {
        return Err(contract("train_distance_preserving needs a DistancePreserve config"));
    }
    let mut data = Vec::with_capacity(graphs.len());
    for g in graphs {
        if g.num_nodes() < 2 {
            return Err(Error::Degenerate("single-node maze has no pairs".into()));
        }
        data.push((g, Target::for_graph_distances(g)?));
    }
    let init = init_params(config, hyper.seed);
    let mut best = (mean_distance_pearson(graphs, &init, config)?, init.clone());
    let mut err = None;
    let mut trained = train_from(&data, config, init, hyper.lr, hyper.epochs, hyper.momentum, |epoch, p| {
        if (epoch + 1) % DISTANCE_EVAL_EVERY == 0 || epoch + 1 == hyper.epochs {
            match mean_distance_pearson(graphs, p, config) {
                Ok(r) if r > best.0 => best = (r, p.clone()),
                Ok(_) => {}
                Err(e) => err = Some(e),
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    trained.params = best.1;
    Ok(trained)
}
