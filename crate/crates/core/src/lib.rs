//! Hierarchical maze learning: a two-layer graph-convolutional network
//! labels shortest-path nodes (or regresses dynamic-programming values) on
//! grid mazes, and an MLP hypernetwork emits parameter deltas that adapt
//! it to perturbed mazes. Exact oracles, isomorphism diagnostics and an
//! experiment harness live alongside.

pub mod autodiff;
pub mod controller;
pub mod error;
pub mod gcn;
pub mod harness;
pub mod maze;
pub mod metrics;
pub mod oracle;

pub use error::{Error, Result};
