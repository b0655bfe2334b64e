use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad error classes, used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing parameter: {0}")]
    MissingParameter(String),

    #[error("index {index:?} out of range for shape {shape:?}")]
    IndexOutOfRange { index: Vec<usize>, shape: Vec<usize> },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("volume kind mismatch: {0}")]
    KindMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("payload length mismatch: header implies {expected} bytes, found {actual}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("illumination is evanescent or outside the condenser aperture: {0}")]
    Evanescent(String),

    #[error("reference tilt violates sideband separability: {0}")]
    Separability(String),

    #[error("sideband peak power {peak:.3e} below noise floor {floor:.3e}")]
    LowSnr { peak: f64, floor: f64 },

    #[error("{pixels} pixels below the amplitude floor {floor:.3e}")]
    ZeroAmplitude { pixels: usize, floor: f64 },

    #[error("degenerate reconstruction: {clamped} of {total} voxels clamped")]
    DegenerateReconstruction { clamped: usize, total: usize },

    #[error("correlation undefined for a constant volume")]
    ConstantVolume,

    #[error("empty exterior shell")]
    EmptyShell,

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_)
            | Error::MalformedHeader(_)
            | Error::UnsupportedVersion(_)
            | Error::PayloadLength { .. }
            | Error::InvariantViolation(_) => ErrorClass::Io,
            Error::LowSnr { .. }
            | Error::ZeroAmplitude { .. }
            | Error::DegenerateReconstruction { .. }
            | Error::ConstantVolume
            | Error::EmptyShell => ErrorClass::Numerical,
            _ => ErrorClass::Config,
        }
    }
}
