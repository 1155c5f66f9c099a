//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records every forward operation in evaluation order, which is
//! also a topological order of the computation graph. [`Tape::backward`]
//! walks the record in reverse, accumulating gradients into fresh buffers,
//! and returns the gradient of every leaf created with [`Tape::param`].
//! A tape can be differentiated once; build a new one for the next pass.

use super::tensor::{matmul_a_bt_into, matmul_at_b_into, Tensor};
use crate::error::{contract, Error, Result};

/// Lower/upper clamp applied to probabilities before taking logs in BCE.
pub const PROB_CLAMP: f64 = 1e-7;

/// Added under the square root of pairwise distances so the gradient
/// stays finite for coincident points.
pub const DIST_EPS: f64 = 1e-12;

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Param,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    View { src: Var, offset: usize },
    PairwiseDistances(Var),
    DivScalar(Var, Var),
    Bce { pred: Var, target: Vec<f64> },
    Mse { pred: Var, target: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Concat(_) => "concat",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::View { .. } => "view",
            Op::PairwiseDistances(_) => "pairwise_distances",
            Op::DivScalar(..) => "div_scalar",
            Op::Bce { .. } => "bce",
            Op::Mse { .. } => "mse",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Records a forward computation for a single backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar with respect to every parameter leaf of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf created with [`Tape::param`]; `None` for any other var.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn upper_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Param, value, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Constant, value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push_raw(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Result<Var> {
        if self.consumed {
            return Err(Error::State("tape already consumed by backward".into()));
        }
        if !value.is_finite() {
            return Err(Error::Numeric { op: op.name() });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(op, value, requires_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), out, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push(Op::Add(a, b), out, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push(Op::Sub(a, b), out, &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push(Op::Mul(a, b), out, &[a, b])
    }

    /// Adds a length-`c` bias to every row of an `r×c` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        let (r, c) = x.dims2("add_row")?;
        if b.len() != c {
            return Err(Error::Dimension {
                op: "add_row",
                lhs: x.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut data = x.data().to_vec();
        for i in 0..r {
            for (o, bv) in data[i * c..(i + 1) * c].iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        let out = Tensor::matrix(r, c, data)?;
        self.push(Op::AddRow(a, bias), out, &[a, bias])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(Op::Relu(a), out, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out, &[a])
    }

    /// Concatenates along the last axis. Leading dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| contract("concat of zero tensors"))?;
        let lead: Vec<usize> = {
            let s = self.shape(*first);
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let rows: usize = lead.iter().product();
        let mut total_cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len().saturating_sub(1) != lead.len() || s[..s.len() - 1] != lead[..] {
                return Err(Error::Dimension {
                    op: "concat",
                    lhs: self.shape(*first).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            total_cols += self.value(p).cols();
        }
        let mut data = Vec::with_capacity(rows * total_cols);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                let c = t.cols();
                data.extend_from_slice(&t.data()[r * c..(r + 1) * c]);
            }
        }
        let mut shape = lead;
        shape.push(total_cols);
        let out = Tensor::new(shape, data)?;
        self.push(Op::Concat(parts.to_vec()), out, parts)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        self.push(Op::Scale(a, s), out, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum(a), out, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(contract("mean of an empty tensor"));
        }
        let out = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        self.push(Op::Mean(a), out, &[a])
    }

    /// A contiguous flat range of `src`, reshaped to `shape`.
    pub fn view(&mut self, src: Var, offset: usize, shape: &[usize]) -> Result<Var> {
        let len: usize = shape.iter().product();
        let t = self.value(src);
        if offset + len > t.len() {
            return Err(Error::Dimension {
                op: "view",
                lhs: t.shape().to_vec(),
                rhs: vec![offset, len],
            });
        }
        let out = Tensor::new(shape.to_vec(), t.data()[offset..offset + len].to_vec())?;
        self.push(Op::View { src, offset }, out, &[src])
    }

    pub fn reshape(&mut self, src: Var, shape: &[usize]) -> Result<Var> {
        let len: usize = shape.iter().product();
        if len != self.value(src).len() {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: self.shape(src).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        self.view(src, 0, shape)
    }

    /// Euclidean distances between all row pairs `i < j` of an `N×h`
    /// matrix, in row-major upper-triangle order.
    pub fn pairwise_distances(&mut self, z: Var) -> Result<Var> {
        let t = self.value(z);
        let (n, h) = t.dims2("pairwise_distances")?;
        let mut out = Vec::with_capacity(upper_pairs(n));
        for i in 0..n {
            let zi = &t.data()[i * h..(i + 1) * h];
            for j in (i + 1)..n {
                let zj = &t.data()[j * h..(j + 1) * h];
                let sq: f64 = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
                out.push((sq + DIST_EPS).sqrt());
            }
        }
        let out = Tensor::vector(out);
        self.push(Op::PairwiseDistances(z), out, &[z])
    }

    /// Divides every element of `a` by the scalar `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let d = self.value(s).item()?;
        let out = self.value(a).map(|v| v / d);
        self.push(Op::DivScalar(a, s), out, &[a, s])
    }

    /// Mean binary cross-entropy of probabilities against fixed targets.
    pub fn bce(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() || target.is_empty() {
            return Err(Error::Dimension {
                op: "bce",
                lhs: p.shape().to_vec(),
                rhs: vec![target.len()],
            });
        }
        let loss = bce_value(p.data(), target);
        self.push(
            Op::Bce {
                pred,
                target: target.to_vec(),
            },
            Tensor::scalar(loss),
            &[pred],
        )
    }

    /// Mean squared error against fixed targets.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() || target.is_empty() {
            return Err(Error::Dimension {
                op: "mse",
                lhs: p.shape().to_vec(),
                rhs: vec![target.len()],
            });
        }
        let n = target.len() as f64;
        let loss = p
            .data()
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        self.push(
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
            Tensor::scalar(loss),
            &[pred],
        )
    }

    /// Backpropagates from a scalar `loss`, consuming the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::State(
                "backward called twice on the same tape; re-run the forward pass".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(contract(format!(
                "backward requires a scalar loss, found shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Param) {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }

        let grads = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| match node.op {
                Op::Param => {
                    let data = grads[i]
                        .take()
                        .unwrap_or_else(|| vec![0.0; node.value.len()]);
                    Some(Tensor::new(node.value.shape().to_vec(), data).expect("leaf shape"))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Param | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                if self.needs(*a) {
                    let buf = self.buf(grads, *a);
                    matmul_a_bt_into(g, bv.data(), buf, m, n, k);
                }
                if self.needs(*b) {
                    let buf = self.buf(grads, *b);
                    matmul_at_b_into(av.data(), g, buf, m, k, n);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.iter().copied());
                self.accumulate(grads, *b, g.iter().copied());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.iter().copied());
                self.accumulate(grads, *b, g.iter().map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, g.iter().zip(bv).map(|(gi, y)| gi * y));
                self.accumulate(grads, *b, g.iter().zip(av).map(|(gi, x)| gi * x));
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.iter().copied());
                if self.needs(*b) {
                    let c = out.cols();
                    let buf = self.buf(grads, *b);
                    for row in g.chunks(c) {
                        for (o, v) in buf.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.accumulate(
                    grads,
                    *a,
                    g.iter().zip(x).map(|(gi, &xi)| if xi > 0.0 { *gi } else { 0.0 }),
                );
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                self.accumulate(grads, *a, g.iter().zip(y).map(|(gi, s)| gi * s * (1.0 - s)));
            }
            Op::Concat(parts) => {
                let rows = out.len() / out.cols();
                let total = out.cols();
                let mut col0 = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if self.needs(p) {
                        let buf = self.buf(grads, p);
                        for r in 0..rows {
                            for j in 0..c {
                                buf[r * c + j] += g[r * total + col0 + j];
                            }
                        }
                    }
                    col0 += c;
                }
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, g.iter().map(|v| v * s));
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, std::iter::repeat_n(g[0], n));
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                let v = g[0] / n as f64;
                self.accumulate(grads, *a, std::iter::repeat_n(v, n));
            }
            Op::View { src, offset } => {
                if self.needs(*src) {
                    let buf = self.buf(grads, *src);
                    for (o, v) in buf[*offset..*offset + g.len()].iter_mut().zip(g) {
                        *o += v;
                    }
                }
            }
            Op::PairwiseDistances(z) => {
                if self.needs(*z) {
                    let zt = self.value(*z);
                    let h = zt.cols();
                    let n = zt.rows();
                    let zd = zt.data();
                    let d = out.data();
                    let buf = self.buf(grads, *z);
                    let mut k = 0;
                    for i in 0..n {
                        for j in (i + 1)..n {
                            let coef = g[k] / d[k];
                            k += 1;
                            if coef == 0.0 {
                                continue;
                            }
                            for c in 0..h {
                                let diff = zd[i * h + c] - zd[j * h + c];
                                buf[i * h + c] += coef * diff;
                                buf[j * h + c] -= coef * diff;
                            }
                        }
                    }
                }
            }
            Op::DivScalar(a, s) => {
                let d = self.value(*s).data()[0];
                self.accumulate(grads, *a, g.iter().map(|v| v / d));
                if self.needs(*s) {
                    let x = self.value(*a).data();
                    let gs: f64 = g.iter().zip(x).map(|(gi, xi)| gi * xi).sum::<f64>() / (d * d);
                    let buf = self.buf(grads, *s);
                    buf[0] -= gs;
                }
            }
            Op::Bce { pred, target } => {
                let p = self.value(*pred).data();
                let n = target.len() as f64;
                let lo = PROB_CLAMP;
                let hi = 1.0 - PROB_CLAMP;
                self.accumulate(
                    grads,
                    *pred,
                    p.iter().zip(target).map(|(&pi, &yi)| {
                        if pi <= lo || pi >= hi {
                            0.0
                        } else {
                            -g[0] * (yi / pi - (1.0 - yi) / (1.0 - pi)) / n
                        }
                    }),
                );
            }
            Op::Mse { pred, target } => {
                let p = self.value(*pred).data();
                let n = target.len() as f64;
                self.accumulate(
                    grads,
                    *pred,
                    p.iter().zip(target).map(|(pi, ti)| g[0] * 2.0 * (pi - ti) / n),
                );
            }
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn buf<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> &'a mut [f64] {
        let len = self.nodes[v.0].value.len();
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Vec<f64>>],
        v: Var,
        contrib: impl Iterator<Item = f64>,
    ) {
        if !self.needs(v) {
            return;
        }
        let buf = self.buf(grads, v);
        for (o, c) in buf.iter_mut().zip(contrib) {
            *o += c;
        }
    }
}

/// Mean BCE with the probability clamp applied; shared by the tape op and metrics.
pub fn bce_value(pred: &[f64], target: &[f64]) -> f64 {
    let n = target.len() as f64;
    -pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let c = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            y * c.ln() + (1.0 - y) * (1.0 - c).ln()
        })
        .sum::<f64>()
        / n
}
