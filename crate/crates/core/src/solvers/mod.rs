//! Solver stack: p-multigrid blocks, additive Schwarz, residual minimization,
//! orthonormalization multigrid and PMG-preconditioned GMRES.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

pub mod gmres;
pub mod omg;
pub mod pmg;
pub mod rm;
pub mod schwarz;

pub use gmres::gmres_pmg_solve;
pub use omg::{OrthoMultigrid, RmObserver};
pub use pmg::Pmg;
pub use rm::{RmOutcome, RmState};
pub use schwarz::{Schwarz, SchwarzPartition};

/// Right-hand side fed to a smoother or block solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum SmootherInput {
    /// The current residual.
    #[default]
    Residual,
    /// The original right-hand side.
    Rhs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop once the residual 2-norm is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Separation degree per variable between the global low-order solve and
    /// the cell-local high-order solves.
    pub k_lo: Vec<usize>,
    pub schwarz_target_dofs: usize,
    pub gmres_restart: usize,
    /// Iteration cap of the recursive solve on each coarse level.
    pub coarse_cycles: usize,
    /// A coarse solve stops once its residual falls below
    /// `max(tol, coarse_rel_tol * ‖restricted residual‖)`.
    pub coarse_rel_tol: f64,
    /// Columns kept in the residual-minimization space before it restarts.
    pub rm_max_columns: usize,
    /// Source of the per-cell high-order right-hand sides in the p-multigrid step.
    pub pmg_high_order_input: SmootherInput,
    /// Input of the Schwarz smoother in the multigrid cycle.
    pub smoother_input: SmootherInput,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 1000,
            k_lo: vec![1],
            schwarz_target_dofs: 2000,
            gmres_restart: 30,
            coarse_cycles: 1,
            coarse_rel_tol: 0.0,
            rm_max_columns: 200,
            pmg_high_order_input: SmootherInput::Residual,
            smoother_input: SmootherInput::Residual,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, degrees: &[usize]) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.k_lo.len() != degrees.len() || self.k_lo.iter().zip(degrees).any(|(lo, k)| lo > k) {
            return Err(Error::InvalidConfig(format!(
                "k_lo {:?} must satisfy 0 <= k_lo <= k = {:?}",
                self.k_lo, degrees
            )));
        }
        if !(0.0..1.0).contains(&self.coarse_rel_tol) {
            return Err(Error::InvalidConfig(format!(
                "coarse_rel_tol must lie in [0, 1), got {}",
                self.coarse_rel_tol
            )));
        }
        if self.gmres_restart == 0 || self.rm_max_columns == 0 || self.coarse_cycles == 0 {
            return Err(Error::InvalidConfig(
                "restart lengths and cycle counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one solve. Non-convergence is reported here rather than as an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverReport {
    pub solver: String,
    pub iterations: usize,
    pub converged: bool,
    /// `‖b - M x‖₂` recomputed from the returned solution.
    pub final_residual: f64,
    #[serde(skip)]
    pub residual_history: Vec<f64>,
    /// Aggregation bases and transfer operators.
    pub setup_basis_ms: f64,
    /// Galerkin matrix products.
    pub setup_matmat_ms: f64,
    /// Smoother setup and iterations.
    pub solve_ms: f64,
}

impl SolverReport {
    pub const CSV_HEADER: [&'static str; 8] = [
        "solver",
        "iterations",
        "converged",
        "final_residual",
        "setup_basis_ms",
        "setup_matmat_ms",
        "solve_ms",
        "history_len",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.solver.clone(),
            self.iterations.to_string(),
            self.converged.to_string(),
            format!("{:e}", self.final_residual),
            format!("{:.3}", self.setup_basis_ms),
            format!("{:.3}", self.setup_matmat_ms),
            format!("{:.3}", self.solve_ms),
            self.residual_history.len().to_string(),
        ]
    }

    /// Header plus one row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)
            .map_err(|e| Error::Io(e.to_string()))?;
        w.write_record(self.csv_record())
            .map_err(|e| Error::Io(e.to_string()))?;
        w.flush()?;
        Ok(())
    }

    /// Two columns: `iteration,residual`.
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "residual"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for (i, r) in self.residual_history.iter().enumerate() {
            w.write_record([i.to_string(), format!("{r:e}")])
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
