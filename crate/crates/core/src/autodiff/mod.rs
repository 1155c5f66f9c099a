//! Dense tensors, a reverse-mode tape, flat parameter vectors and SGD.

mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{glorot_uniform, grad_check, sgd_step, Sgd, SgdConfig, FD_STEP};
pub use params::{segment_vars, ParamLayout, ParamVector, Segment};
pub use tape::{bce_value, Gradients, Tape, Var, DIST_EPS, PROB_CLAMP};
pub use tensor::Tensor;
