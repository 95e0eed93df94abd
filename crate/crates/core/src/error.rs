use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("framing error: {0}")]
    Framing(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    /// The request falls outside the physical validity range of a solver
    /// (for instance a propagation distance beyond shock formation).
    #[error("validity error: {0}")]
    Validity(String),
    #[error("divergence in {substep} substep at z = {z:.6e} m (harmonic {harmonic}, |p| = {magnitude:.3e} Pa)")]
    Divergence {
        substep: &'static str,
        z: f64,
        harmonic: usize,
        magnitude: f64,
    },
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

/// Coarse failure category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config = 1,
    Data = 2,
    Numerical = 3,
    Validity = 4,
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Domain(_) | Error::Config(_) | Error::Bounds(_) => Category::Config,
            Error::Framing(_) | Error::Data(_) | Error::Io(_) | Error::Wav(_) => Category::Data,
            Error::Numerical(_) | Error::Divergence { .. } => Category::Numerical,
            Error::Validity(_) => Category::Validity,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.category() as i32
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
