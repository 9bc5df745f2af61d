use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autograd(#[from] costereo_autograd::Error),
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("empty normalizer in {term}: every pixel carries zero weight")]
    EmptyNormalizer { term: &'static str },
    #[error("smooth-l1 input {0} is negative")]
    NegativeInput(f64),
    #[error("empty valid-pixel mask")]
    EmptyMask,
    #[error("ground-truth occlusion mask unavailable")]
    MissingOcclusionTruth,
    #[error("missing ground-truth disparity for sample {0}")]
    MissingGroundTruth(String),
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate crop: {0}")]
    DegenerateCrop(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated data: expected {expected} bytes, got {got}")]
    TruncatedData { expected: usize, got: usize },
    #[error("wrong bit depth: expected 16-bit grayscale PNG, got {got}")]
    WrongBitDepth { got: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}
