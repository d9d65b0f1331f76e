//! Minimal reverse-mode differentiation: a per-step tape ([`Graph`]) over
//! dense `f64` tensors, a persistent [`ParamStore`], and the [`Adam`] optimizer.
//!
//! Parameters live outside any graph. Each optimization step opens a fresh
//! graph, binds parameters into it as leaves, records the forward pass, and
//! [`Graph::backward`] accumulates gradients back into the store.

mod adam;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod param;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{check_gradients, combined_rel_err, GradCheck};
pub use graph::{Graph, LinearMap, Padding, Var};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Arithmetic used inside convolution GEMMs. `F32` trades accuracy for
/// roughly 2-3x GEMM throughput; everything else stays `f64`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("loss selects no entries")]
    EmptySelection,
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
}
