use crate::Species;

/// Errors produced while building meshes, spaces, operators or solving systems.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid aggregation map: {0}")]
    InvalidMap(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("level-set is numerically zero on all probe points of cell {cell}")]
    DegenerateLevelSet { cell: usize },

    #[error("species {species:?} is not present in cell {cell}")]
    MissingSpecies { cell: usize, species: Species },

    #[error("cell {cell} is not cut by the interface")]
    MissingInterface { cell: usize },

    #[error(
        "mass matrix of cell {cell} species {species:?} is not positive definite \
         (volume fraction {fraction:.3e}); the cell should be agglomerated"
    )]
    InsufficientAgglomeration {
        cell: usize,
        species: Species,
        fraction: f64,
    },

    #[error("small cut cell {cell} ({species:?}) has no neighbour of the same species")]
    IsolatedSmallCell { cell: usize, species: Species },

    #[error("aggregate with representative {representative} ({species:?}) has a rank-deficient mass matrix")]
    DegenerateAggregate {
        representative: usize,
        species: Species,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem(_)
                | Error::InsufficientAgglomeration { .. }
                | Error::DegenerateAggregate { .. }
                | Error::IsolatedSmallCell { .. }
                | Error::DegenerateLevelSet { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
