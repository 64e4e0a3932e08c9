use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("average power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("cannot power-normalize an all-zero latent")]
    DegenerateLatent,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("real vector of odd length {0} cannot be paired into complex symbols")]
    OddLength(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model configuration: {0}")]
    InvalidModel(String),
    #[error("cannot draw {requested} unique pairs from {available} candidates")]
    TooManyPairs { requested: u64, available: u64 },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid capacity-region input: {0}")]
    InvalidRegion(String),
    #[error("parameter vector has {actual} entries, model expects {expected}")]
    ParameterCount { expected: usize, actual: usize },
    #[error("model variant mismatch: {0}")]
    VariantMismatch(&'static str),
}
