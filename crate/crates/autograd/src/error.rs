use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch ({details})")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("division by near-zero value {value:e}")]
    DivisionByNearZero { value: f64 },
    #[error("disparity contains non-finite values")]
    NonFiniteDisparity,
    #[error("backward requires a scalar loss, got {numel} elements")]
    NonScalarLoss { numel: usize },
    #[error("backward was already run from this tensor")]
    DoubleBackward,
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
}

pub(crate) fn shape_err<T>(op: &'static str, details: String) -> Result<T> {
    Err(Error::ShapeMismatch { op, details })
}
