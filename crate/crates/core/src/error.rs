use std::path::PathBuf;

/// Errors produced by the segmentation pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("pixel {pixel} has no positive mass")]
    AllZeroPixel { pixel: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("label {label} out of range for a space of {count} labels")]
    LabelOutOfRange { label: usize, count: usize },

    #[error("bad magic bytes {0:?}, expected \"TNSR\"")]
    BadMagic([u8; 4]),
    #[error("unsupported tensor version {0}")]
    VersionMismatch(u8),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("tensor dimensions overflow a 32-bit element count")]
    DimOverflow,
    #[error("malformed file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("brute-force size guard exceeded: {0}")]
    SizeGuardExceeded(String),
    #[error("feature dimension {0} is not supported by the fast filter")]
    UnsupportedFeatureDim(usize),
    #[error("bandwidth must be strictly positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("pairwise kernel is undefined for a pixel paired with itself")]
    SamePixel,

    #[error("disparity must be positive, got {0}")]
    NonPositiveDisparity(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("point lands behind the camera after motion")]
    BehindCamera,
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no consensus: best inlier ratio {ratio:.3} is below {min:.3}")]
    NoConsensus { ratio: f64, min: f64 },
    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("mean-field update produced a non-finite value")]
    NonFiniteUpdate,

    #[error("label {0} has identical targets on every instance")]
    DegenerateLabel(String),
    #[error("empty data: {0}")]
    EmptyData(String),
    #[error("model has not been trained for enough rounds")]
    UntrainedModel,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
