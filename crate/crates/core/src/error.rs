use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the simulation engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: coincident site positions")]
    DegenerateGeometry,

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("system file line {line}: {message}")]
    SystemFile { line: usize, message: String },

    #[error("site index {index} out of range ({count} sites)")]
    SiteIndex { index: usize, count: usize },

    #[error("system too large for exact engine: {spins} spins exceeds limit of {limit}")]
    SystemTooLarge { spins: usize, limit: usize },

    #[error("unknown species label '{0}'")]
    UnknownSpecies(String),

    #[error("non-Hermitian operator (max deviation {max_dev:.3e})")]
    NonHermitian { max_dev: f64 },

    #[error("non-unitary propagator (max deviation {max_dev:.3e})")]
    NonUnitary { max_dev: f64 },

    #[error("non-physical observable: imaginary part {imag:.3e} above tolerance")]
    NonPhysicalObservable { imag: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pulse calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("empty timeline")]
    EmptyTimeline,

    #[error("invalid protocol configuration: {0}")]
    InvalidProtocol(String),
}
