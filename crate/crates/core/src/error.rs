use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid optical configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid too small for the beam: {fraction:.3e} of the power lies outside the grid")]
    GridTooSmall { fraction: f64 },

    #[error("spectral aliasing: {fraction:.3e} of the spectral power lies near the Nyquist wavenumber")]
    Aliasing { fraction: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite trajectory state at z = {z} m (x = {x})")]
    NonFinite { z: f64, x: f64 },

    #[error("plane {index} failed: {source}")]
    Plane {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory mismatch: {0}")]
    Mismatch(String),

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
