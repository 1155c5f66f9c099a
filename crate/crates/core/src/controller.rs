//! The MLP hypernetwork that adapts a trained GCN.
//!
//! For each task the frozen base network is run once; its outputs (and
//! optionally its latent embedding) are concatenated with the flat base
//! parameters θ to form the controller input. The controller emits Δθ and
//! the task is re-run with θ′ = θ + Δθ. Only the controller parameters φ
//! are trained; gradients reach φ through the adapted forward pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot_uniform, segment_vars, ParamLayout, ParamVector, Sgd, SgdConfig, Tape, Tensor, Var};
use crate::error::{contract, Error, Result};
use crate::gcn::{self, GcnConfig, GcnOutput, GraphInput, Target};
use crate::maze::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerInput {
    /// `flatten(Y) ⧺ flatten(θ)`
    #[default]
    Basic,
    /// `flatten(Z) ⧺ flatten(Y) ⧺ flatten(θ)`
    Enriched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub input: ControllerInput,
    pub hidden: Vec<usize>,
    /// γ in `Δθ = γ · MLP(…)`.
    pub delta_scale: f64,
    /// Multiplies the `Y` and `Z` blocks of the input; θ is passed unscaled.
    #[serde(default = "one")]
    pub output_input_scale: f64,
    /// Use θ′ = Δθ instead of θ′ = θ + Δθ.
    #[serde(default)]
    pub replace_params: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            input: ControllerInput::Basic,
            hidden: vec![64, 64],
            delta_scale: 1.0,
            output_input_scale: 1.0,
            replace_params: false,
        }
    }
}

/// Input width for a base network on `num_nodes` nodes.
pub fn input_dim(input: ControllerInput, gcn: &GcnConfig, num_nodes: usize) -> usize {
    let basic = gcn.output_dim * num_nodes + gcn.num_params();
    match input {
        ControllerInput::Basic => basic,
        ControllerInput::Enriched => basic + gcn.hidden_dim * num_nodes,
    }
}

/// A controller bound to a base-network shape and maze size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub config: ControllerConfig,
    pub gcn: GcnConfig,
    pub num_nodes: usize,
    pub params: ParamVector,
}

impl Controller {
    pub fn layout(config: &ControllerConfig, gcn: &GcnConfig, num_nodes: usize) -> ParamLayout {
        let mut dims = vec![input_dim(config.input, gcn, num_nodes)];
        dims.extend(&config.hidden);
        dims.push(gcn.num_params());
        let names: Vec<(String, Vec<usize>)> = dims
            .windows(2)
            .enumerate()
            .flat_map(|(l, w)| [(format!("w{l}"), vec![w[0], w[1]]), (format!("b{l}"), vec![w[1]])])
            .collect();
        let refs: Vec<(&str, Vec<usize>)> = names.iter().map(|(n, s)| (n.as_str(), s.clone())).collect();
        ParamLayout::new(&refs)
    }

    /// Glorot hidden layers; the output layer starts at zero so Δθ = 0.
    pub fn new(config: ControllerConfig, gcn: GcnConfig, num_nodes: usize, seed: u64) -> Result<Self> {
        if config.hidden.contains(&0) {
            return Err(contract("controller hidden widths must be ≥ 1"));
        }
        if !config.delta_scale.is_finite() {
            return Err(contract("delta_scale must be finite"));
        }
        let layout = Self::layout(&config, &gcn, num_nodes);
        let mut rng = rng_for(seed);
        let segs = layout.segments();
        let last_w = segs.len() - 2;
        let tensors: Vec<Tensor> = segs
            .iter()
            .enumerate()
            .map(|(k, s)| {
                if k % 2 == 1 || k == last_w {
                    Tensor::zeros(&s.shape)
                } else {
                    glorot_uniform(&mut rng, s.shape[0], s.shape[1])
                }
            })
            .collect();
        let params = ParamVector::flatten(layout, &tensors)?;
        Ok(Self {
            config,
            gcn,
            num_nodes,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        input_dim(self.config.input, &self.gcn, self.num_nodes)
    }

    /// Builds the `1 × D` input row from a base forward pass.
    pub fn build_input(&self, base: &GcnOutput, theta: &ParamVector) -> Result<Tensor> {
        let s = self.config.output_input_scale;
        let mut row = Vec::with_capacity(self.input_dim());
        if self.config.input == ControllerInput::Enriched {
            row.extend(base.latent.data().iter().map(|v| v * s));
        }
        row.extend(base.output.data().iter().map(|v| v * s));
        row.extend_from_slice(&theta.data);
        if row.len() != self.input_dim() {
            return Err(contract(format!(
                "controller input length: expected {}, got {}",
                self.input_dim(),
                row.len()
            )));
        }
        Tensor::matrix(1, row.len(), row)
    }

    /// Records `Δθ` (a flat vector) for `input` with controller parameters `phi`.
    pub fn delta_on_tape(&self, tape: &mut Tape, input: Var, phi: Var) -> Result<Var> {
        if tape.value(input).len() != self.input_dim() {
            return Err(contract(format!(
                "controller input length: expected {}, got {}",
                self.input_dim(),
                tape.value(input).len()
            )));
        }
        let layout = self.params.layout.clone();
        let seg = segment_vars(tape, phi, &layout)?;
        let mut h = input;
        let layers = seg.len() / 2;
        for l in 0..layers {
            h = tape.matmul(h, seg[2 * l])?;
            h = tape.add_row(h, seg[2 * l + 1])?;
            if l + 1 < layers {
                h = tape.relu(h)?;
            }
        }
        let h = tape.scale(h, self.config.delta_scale)?;
        tape.reshape(h, &[self.gcn.num_params()])
    }

    /// `θ′` as a tape variable given a constant θ and recorded Δθ.
    pub fn adapted_on_tape(&self, tape: &mut Tape, theta: Var, delta: Var) -> Result<Var> {
        if self.config.replace_params {
            Ok(delta)
        } else {
            tape.add(theta, delta)
        }
    }

    /// Δθ for one base forward pass.
    pub fn forward(&self, base: &GcnOutput, theta: &ParamVector) -> Result<ParamVector> {
        self.check_theta(theta)?;
        let input = self.build_input(base, theta)?;
        let mut tape = Tape::new();
        let x = tape.constant(input);
        let phi = tape.constant(self.params.as_tensor());
        let d = self.delta_on_tape(&mut tape, x, phi)?;
        theta.with_data(tape.value(d).data().to_vec())
    }

    /// θ′ for `graph`: base pass with θ, controller, then adaptation.
    pub fn adapted_params(&self, graph: &GraphInput, theta: &ParamVector) -> Result<ParamVector> {
        self.check_theta(theta)?;
        let base = gcn::forward(graph, theta, &self.gcn)?;
        let delta = self.forward(&base, theta)?;
        if self.config.replace_params {
            Ok(delta)
        } else {
            adapt(theta, &delta)
        }
    }

    fn check_theta(&self, theta: &ParamVector) -> Result<()> {
        if theta.layout != self.gcn.layout() {
            return Err(contract("θ layout does not match the controller's GCN config"));
        }
        Ok(())
    }

    /// Adapted loss for one task as a function of a `phi` leaf.
    pub fn task_loss_on_tape(&self, tape: &mut Tape, task: &PreparedTask, theta: &ParamVector, phi: Var) -> Result<Var> {
        let x = tape.constant(task.input.clone());
        let th = tape.constant(theta.as_tensor());
        let delta = self.delta_on_tape(tape, x, phi)?;
        let adapted = self.adapted_on_tape(tape, th, delta)?;
        let vars = gcn::forward_on_tape(tape, &task.graph, adapted, &self.gcn)?;
        gcn::loss_on_tape(tape, vars, &task.target)
    }
}

/// `θ + Δθ`; θ is left untouched.
pub fn adapt(theta: &ParamVector, delta: &ParamVector) -> Result<ParamVector> {
    theta.ensure_same_layout(delta)?;
    theta.with_data(theta.data.iter().zip(&delta.data).map(|(a, b)| a + b).collect())
}

/// `θ′` for a value-regression base network; the base value predictions
/// take the place of `Y` in the controller input.
pub fn adapt_value(controller: &Controller, graph: &GraphInput, theta: &ParamVector) -> Result<ParamVector> {
    if controller.gcn.mode != gcn::GcnMode::Regress {
        return Err(contract("adapt_value needs a Regress-mode base network"));
    }
    controller.adapted_params(graph, theta)
}

/// One perturbed maze with its oracle targets.
#[derive(Debug, Clone)]
pub struct AdaptationTask {
    pub id: usize,
    pub graph: GraphInput,
    pub target: Target,
}

/// A task with its controller input precomputed from the frozen base network.
#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub id: usize,
    pub graph: GraphInput,
    pub target: Target,
    pub input: Tensor,
}

impl PreparedTask {
    pub fn new(task: &AdaptationTask, controller: &Controller, theta: &ParamVector) -> Result<Self> {
        match (&task.target, controller.gcn.mode) {
            (Target::Labels(_), gcn::GcnMode::Classify)
            | (Target::Values(_), gcn::GcnMode::Regress)
            | (Target::Distances(_), gcn::GcnMode::DistancePreserve) => {}
            _ => return Err(contract(format!("task {} target does not match the GCN mode", task.id))),
        }
        if task.graph.num_nodes() != controller.num_nodes {
            return Err(contract(format!(
                "task {} has {} nodes, controller expects {}",
                task.id,
                task.graph.num_nodes(),
                controller.num_nodes
            )));
        }
        let base = gcn::forward(&task.graph, theta, &controller.gcn)?;
        Ok(Self {
            id: task.id,
            graph: task.graph.clone(),
            target: task.target.clone(),
            input: controller.build_input(&base, theta)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerHyper {
    pub lr: f64,
    pub epochs: usize,
    #[serde(default)]
    pub momentum: f64,
}

/// Per-epoch losses, measured before that epoch's update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub total: Vec<f64>,
    pub per_task: Vec<Vec<f64>>,
}

impl LossTrace {
    /// `epoch, total_loss, task_0, task_1, …`
    pub fn to_csv(&self) -> String {
        let tasks = self.per_task.first().map_or(0, Vec::len);
        let mut out = String::from("epoch,total_loss");
        for t in 0..tasks {
            out.push_str(&format!(",task_{t}"));
        }
        out.push('\n');
        for (e, (total, per)) in self.total.iter().zip(&self.per_task).enumerate() {
            out.push_str(&format!("{e},{total}"));
            for l in per {
                out.push_str(&format!(",{l}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Mean adapted loss over tasks and its gradient with respect to φ.
pub fn loss_and_grad(controller: &Controller, tasks: &[PreparedTask], theta: &ParamVector) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let results: Vec<Result<(f64, Tensor)>> = tasks
        .par_iter()
        .map(|task| {
            let mut tape = Tape::new();
            let phi = tape.param(controller.params.as_tensor());
            let loss = controller.task_loss_on_tape(&mut tape, task, theta, phi)?;
            let value = tape.value(loss).item()?;
            let mut grads = tape.backward(loss)?;
            Ok((value, grads.take(phi).expect("phi gradient")))
        })
        .collect();
    let m = tasks.len() as f64;
    let mut grad = vec![0.0; controller.params.len()];
    let mut per_task = Vec::with_capacity(tasks.len());
    // merged in task order so the sum does not depend on scheduling
    for r in results {
        let (l, g) = r?;
        per_task.push(l);
        for (acc, v) in grad.iter_mut().zip(g.data()) {
            *acc += v / m;
        }
    }
    let total = per_task.iter().sum::<f64>() / m;
    Ok((total, grad, per_task))
}

/// Trains φ on a fixed task set; θ stays frozen.
pub fn train_controller(
    tasks: &[AdaptationTask],
    theta: &ParamVector,
    controller: Controller,
    hyper: &ControllerHyper,
) -> Result<(Controller, LossTrace)> {
    train_controller_with(tasks, theta, controller, hyper, None::<fn(usize) -> Result<Vec<AdaptationTask>>>)
}

/// Like [`train_controller`]; when `resample` is given it supplies a fresh
/// task set at the start of every epoch after the first.
pub fn train_controller_with<F>(
    tasks: &[AdaptationTask],
    theta: &ParamVector,
    mut controller: Controller,
    hyper: &ControllerHyper,
    resample: Option<F>,
) -> Result<(Controller, LossTrace)>
where
    F: Fn(usize) -> Result<Vec<AdaptationTask>>,
{
    if tasks.is_empty() {
        return Err(contract("controller training needs at least one task"));
    }
    controller.check_theta(theta)?;
    let prepare = |ts: &[AdaptationTask], c: &Controller| -> Result<Vec<PreparedTask>> {
        ts.iter().map(|t| PreparedTask::new(t, c, theta)).collect()
    };
    let mut prepared = prepare(tasks, &controller)?;
    let mut opt = Sgd::new(SgdConfig {
        lr: hyper.lr,
        momentum: hyper.momentum,
    });
    let mut trace = LossTrace::default();
    for epoch in 0..hyper.epochs {
        if epoch > 0 {
            if let Some(f) = &resample {
                prepared = prepare(&f(epoch)?, &controller)?;
            }
        }
        let (total, grad, per_task) = loss_and_grad(&controller, &prepared, theta).map_err(|e| match e {
            Error::Numeric { .. } => Error::Divergence { epoch, loss: f64::NAN },
            other => other,
        })?;
        if !total.is_finite() {
            return Err(Error::Divergence { epoch, loss: total });
        }
        trace.total.push(total);
        trace.per_task.push(per_task);
        let g = controller.params.with_data(grad)?;
        controller.params = opt.step(&controller.params, &g)?;
    }
    Ok((controller, trace))
}
