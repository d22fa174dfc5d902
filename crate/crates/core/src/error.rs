use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: String, found: String },

    #[error("zoom factor {r} does not divide image size {height}x{width}")]
    NotDivisible { r: usize, height: usize, width: usize },

    #[error("invalid zoom factor {0}; must be at least 1")]
    InvalidFactor(usize),

    #[error("unsupported channel count {0}; expected 1 or 3")]
    InvalidChannels(usize),

    #[error("channel mismatch: model has {expected} channel(s), input has {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("image contains non-finite values")]
    NonFinite,

    #[error("spectrum is not Hermitian: imaginary residual {residual:e} exceeds {tolerance:e}")]
    NonHermitianSpectrum { residual: f64, tolerance: f64 },

    #[error("degenerate model: covariance of the degraded texture is identically zero")]
    DegenerateModel,

    #[error("image {height}x{width} is too small (minimum side {min})")]
    TooSmall { height: usize, width: usize, min: usize },

    #[error("dense operator over {pixels} pixels exceeds the cap of {cap}")]
    TooLarge { pixels: usize, cap: usize },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("images with an alpha channel are not supported")]
    AlphaNotSupported,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn size(expected: impl ToString, found: impl ToString) -> Self {
        Error::SizeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
