//! Co-teaching unsupervised stereo matching at desk scale.
//!
//! Two compact differentiable stereo matchers train each other by swapping
//! dynamically thresholded occlusion estimates while minimizing a hybrid
//! photometric / smoothness / augmentation-consistency loss. Everything
//! runs on synthetic layered scenes with exact ground truth.

pub mod augment;
pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod occlusion;
pub mod trainer;

pub use config::{ArchConfig, CoTeachConfig, LossWeights};
pub use error::{Error, Result};
