//! Cut-cell (extended) discontinuous Galerkin discretization of the Poisson
//! problem with a discontinuous diffusion coefficient, together with an
//! aggregation-multigrid solver stack.
//!
//! The pipeline runs bottom-up:
//!
//! 1. [`mesh`]: Cartesian background mesh, its face graph and nested
//!    aggregation maps.
//! 2. [`cutcell`]: level-set classification and cut-cell quadrature.
//! 3. [`xdg`]: orthonormal DG basis, XDG index map and cut-cell
//!    re-orthonormalization.
//! 4. [`sip`]: symmetric interior penalty assembly.
//! 5. [`multigrid`]: small-cell agglomeration, transfer operators and the
//!    Galerkin hierarchy.
//! 6. [`solvers`]: p-multigrid, additive Schwarz, residual minimization,
//!    orthonormalization multigrid and preconditioned GMRES.
//! 7. [`bench`]: the benchmark harness behind the `xdgmg` binary.

pub mod basis;
pub mod bench;
pub mod cutcell;
pub mod error;
pub mod levelset;
pub mod linalg;
pub mod mesh;
pub mod multigrid;
pub mod quadrature;
pub mod sip;
pub mod solvers;
pub mod xdg;

pub use error::{Error, Result};

/// The two phases separated by the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum Species {
    /// `φ < 0`
    A,
    /// `φ > 0`
    B,
}

impl Species {
    pub const ALL: [Species; 2] = [Species::A, Species::B];

    pub fn index(self) -> usize {
        match self {
            Species::A => 0,
            Species::B => 1,
        }
    }

    pub fn other(self) -> Species {
        match self {
            Species::A => Species::B,
            Species::B => Species::A,
        }
    }
}

pub mod prelude {
    pub use crate::bench::{
        micro_bench_matops, run_case, BenchCase, Discretization, Manufactured, SolverKind,
    };
    pub use crate::cutcell::{CutCellMesh, GeometryConfig};
    pub use crate::levelset::{BenchmarkSurface, LevelSet, NamedLevelSet, Plane, Sphere};
    pub use crate::linalg::{BlockSparseMatrix, DirectFactorization};
    pub use crate::mesh::{AggregationMap, BackgroundMesh};
    pub use crate::multigrid::{
        small_cell_agglomeration_map, CutAggregationMap, Hierarchy, HierarchyConfig,
    };
    pub use crate::sip::{PenaltyConfig, PenaltyScales, PoissonProblem};
    pub use crate::solvers::{
        gmres_pmg_solve, OrthoMultigrid, RmState, SolverConfig, SolverReport,
    };
    pub use crate::xdg::{SpeciesOrthoBlocks, XdgIndexMap};
    pub use crate::{Error, Result, Species};
}
