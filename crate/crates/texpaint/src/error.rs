//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the texture synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A mesh file could not be read.
    #[error("mesh io: {0}")]
    MeshIo(#[from] std::io::Error),

    /// A line of an OBJ file could not be parsed.
    #[error("obj parse: line {line}: {msg}")]
    ObjParse { line: usize, msg: String },

    /// Mesh data is structurally invalid (bad indices, degenerate facets, ...).
    #[error("mesh: {0}")]
    InvalidMesh(String),

    /// A noise schedule could not be constructed.
    #[error("schedule: {0}")]
    InvalidSchedule(String),

    /// The requested DDIM noise scale exceeds what the schedule admits.
    #[error(
        "schedule: sigma^2 = {sigma_sq:.6e} exceeds 1 - alpha_bar[{t_prev}] = {limit:.6e}"
    )]
    SigmaTooLarge {
        t_prev: usize,
        sigma_sq: f64,
        limit: f64,
    },

    /// Shapes of two coupled grids disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A backend (codec or predictor) was configured inconsistently.
    #[error("backend: {0}")]
    Backend(String),

    /// A latent or loss became non-finite during the run.
    #[error("non-finite value in {stage} at step {step}, view {view}")]
    NonFinite {
        stage: &'static str,
        step: usize,
        view: usize,
    },

    /// An optimization loop diverged and could not be recovered.
    #[error("optimization: {0}")]
    Optimization(String),

    /// A configuration file or override was invalid. Names the offending key.
    #[error("config: {0}")]
    Config(String),

    /// PNG or other image I/O failed.
    #[error("image io: {0}")]
    ImageIo(String),
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        Error::ImageIo(e.to_string())
    }
}

/// Convenient result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
