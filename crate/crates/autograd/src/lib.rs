//! Minimal reverse-mode automatic differentiation over dense real arrays.
//!
//! Tensors are immutable after creation (gradient accumulation excepted).
//! Every operation records a node in an implicit DAG; [`Tensor::backward`]
//! runs a single reverse-topological traversal and accumulates gradients
//! into each `requires_grad` tensor it reaches.
//!
//! The engine is generic over the element type: `f32` for training and
//! `f64` for gradient verification, sharing one code path.

mod backward;
pub mod check;
mod elementwise;
mod error;
mod op;
mod reduce;
mod spatial;
mod tensor;

pub use error::{Error, Result};
pub use spatial::{
    box_mean3, concat_channels, conv2d, flip_x, forward_diff_x, forward_diff_y, soft_argmin,
    upsample_bilinear, warp_horizontal,
};
pub use tensor::{real, Real, Tensor};

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(false);

/// Enable data-parallel loops inside the heavy spatial kernels.
///
/// Off by default; single-threaded execution is the reproducibility
/// reference. The parallel partitioning splits work along independent
/// output planes while each output element keeps its sequential
/// accumulation order, so results are bitwise identical either way.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

pub(crate) fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}
