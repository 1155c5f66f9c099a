use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{contract, Error, Result};

/// `params − lr · grads`, elementwise.
pub fn sgd_step(params: &ParamVector, grads: &ParamVector, lr: f64) -> Result<ParamVector> {
    params.ensure_same_layout(grads)?;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(contract(format!("learning rate must be finite and non-negative, got {lr}")));
    }
    let data = params
        .data
        .iter()
        .zip(&grads.data)
        .map(|(p, g)| p - lr * g)
        .collect();
    params.with_data(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    /// Heavy-ball coefficient; `0.0` is plain gradient descent.
    #[serde(default)]
    pub momentum: f64,
}

/// Gradient descent with optional heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    config: SgdConfig,
    velocity: Option<Vec<f64>>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Self {
        Self {
            config,
            velocity: None,
        }
    }

    pub fn step(&mut self, params: &ParamVector, grads: &ParamVector) -> Result<ParamVector> {
        if self.config.momentum == 0.0 {
            return sgd_step(params, grads, self.config.lr);
        }
        params.ensure_same_layout(grads)?;
        let mu = self.config.momentum;
        let v = self.velocity.get_or_insert_with(|| vec![0.0; grads.len()]);
        for (vi, g) in v.iter_mut().zip(&grads.data) {
            *vi = mu * *vi + g;
        }
        let data = params
            .data
            .iter()
            .zip(v.iter())
            .map(|(p, vi)| p - self.config.lr * vi)
            .collect();
        params.with_data(data)
    }
}

/// Uniform Glorot initialisation, `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("shape matches data")
}

/// Central finite-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Compares the tape gradient of `f` at `point` with central finite
/// differences. Returns `max_i |analytic − numeric| / max(1, |numeric|)`.
///
/// `f` receives a tape and the flat parameter leaf and must return a
/// scalar loss recorded on that tape.
pub fn grad_check<F>(f: F, point: &[f64]) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |x: &[f64]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.param(Tensor::vector(x.to_vec()));
        let loss = f(&mut tape, leaf)?;
        let v = tape.value(loss).item()?;
        if !v.is_finite() {
            return Err(Error::Numeric { op: "grad_check" });
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let leaf = tape.param(Tensor::vector(point.to_vec()));
    let loss = f(&mut tape, leaf)?;
    let analytic = tape.backward(loss)?.take(leaf).expect("leaf gradient");

    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let up = eval(&x)?;
        x[i] = orig - FD_STEP;
        let down = eval(&x)?;
        x[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
