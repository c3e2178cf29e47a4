use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A requested sampling time does not fall on the simulation grid.
    #[error("sampling ratio {ratio} does not align with a grid of {steps} steps")]
    Alignment { ratio: f64, steps: usize },

    /// Data does not carry the statistics a design needs.
    #[error("shape error: {0}")]
    Shape(String),

    #[error("parameters not identifiable: {0}")]
    Identifiability(String),

    #[error("information matrix is singular: rank {rank} of {dim}")]
    Singular { rank: usize, dim: usize },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("empty simulation")]
    EmptySimulation,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
