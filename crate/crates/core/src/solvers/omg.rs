//! Orthonormalization multigrid: every smoother and coarse-grid correction is
//! a candidate for residual minimization, so the residual never grows.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{norm, BlockSparseMatrix, DirectFactorization};
use crate::multigrid::Hierarchy;
use crate::solvers::schwarz::{Schwarz, SchwarzPartition};
use crate::solvers::{RmState, SmootherInput, SolverConfig, SolverReport};

/// Relative residual reduction after which the finest-level residual is recomputed.
const REPLACE_FACTOR: f64 = 1e-4;

/// Called after every residual-minimization step with the level index (0 is finest).
pub type RmObserver<'a> = dyn FnMut(usize, &RmState, &BlockSparseMatrix) + 'a;

enum LevelSolver {
    Smoother(Schwarz),
    Direct(DirectFactorization),
}

/// Solver state for a [`Hierarchy`]: Schwarz smoothers on all but the
/// coarsest level, a direct factorization there.
pub struct OrthoMultigrid<'h> {
    hierarchy: &'h Hierarchy,
    solvers: Vec<LevelSolver>,
    config: SolverConfig,
    setup_ms: f64,
}

impl<'h> OrthoMultigrid<'h> {
    pub fn new(hierarchy: &'h Hierarchy, config: &SolverConfig) -> Result<Self> {
        config.validate(&[hierarchy.degree()])?;
        let clock = Instant::now();
        let last = hierarchy.num_levels() - 1;
        let solvers = hierarchy
            .levels()
            .iter()
            .enumerate()
            .map(|(l, level)| {
                if l == last {
                    Ok(LevelSolver::Direct(DirectFactorization::from_block_sparse(
                        &level.matrix,
                    )?))
                } else {
                    let part = SchwarzPartition::from_matrix(
                        &level.matrix,
                        &level.index_map,
                        config.schwarz_target_dofs,
                    );
                    Ok(LevelSolver::Smoother(Schwarz::new(
                        &level.matrix,
                        &level.index_map,
                        part,
                        &config.k_lo,
                        config.pmg_high_order_input,
                    )?))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OrthoMultigrid {
            hierarchy,
            solvers,
            config: config.clone(),
            setup_ms: clock.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Solves the finest-level system `M¹ x = b¹` from `x0`.
    pub fn solve(&self, x0: Option<&[f64]>) -> Result<(Vec<f64>, SolverReport)> {
        self.solve_observed(
            self.hierarchy.level(0).rhs.as_slice(),
            x0,
            &mut |_, _, _| {},
        )
    }

    /// As [`OrthoMultigrid::solve`] for an arbitrary right-hand side, calling
    /// `observer` after every residual-minimization step on any level.
    pub fn solve_observed(
        &self,
        b: &[f64],
        x0: Option<&[f64]>,
        observer: &mut RmObserver<'_>,
    ) -> Result<(Vec<f64>, SolverReport)> {
        let m = &self.hierarchy.level(0).matrix;
        if b.len() != m.nrows() || x0.is_some_and(|x| x.len() != b.len()) {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: b.len(),
            });
        }
        let clock = Instant::now();
        let x0 = x0.map_or_else(|| vec![0.0; b.len()], <[f64]>::to_vec);
        let (x, history, iterations) = self.cycle(
            0,
            b,
            x0,
            self.config.max_iter,
            Some(self.config.tol),
            observer,
        )?;
        let ax = m.matvec(&x)?;
        let true_res = norm(&b.iter().zip(&ax).map(|(a, c)| a - c).collect::<Vec<_>>());
        let timings = self.hierarchy.timings();
        let report = SolverReport {
            solver: "omg".into(),
            iterations,
            converged: history.last().is_some_and(|&r| r <= self.config.tol),
            final_residual: true_res,
            residual_history: history,
            setup_basis_ms: timings.basis_ms,
            setup_matmat_ms: timings.matmat_ms,
            solve_ms: self.setup_ms + clock.elapsed().as_secs_f64() * 1e3,
        };
        Ok((x, report))
    }

    /// Runs up to `cycles` iterations on level `l` (stopping early at `tol`)
    /// and returns the iterate, the residual history and the iteration count.
    fn cycle(
        &self,
        l: usize,
        b: &[f64],
        x0: Vec<f64>,
        cycles: usize,
        tol: Option<f64>,
        observer: &mut RmObserver<'_>,
    ) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let level = self.hierarchy.level(l);
        let m = &level.matrix;
        let smoother = match &self.solvers[l] {
            LevelSolver::Direct(f) => {
                let x = f.apply(b)?;
                return Ok((x, Vec::new(), 0));
            }
            LevelSolver::Smoother(s) => s,
        };
        let r = restrict_residual(m, b, &x0)?;
        let mut state = RmState::new(x0, r, self.config.rm_max_columns);
        let mut history = vec![state.residual_norm()];
        let r_mat = level
            .restriction
            .as_ref()
            .expect("non-coarsest levels have a restriction");
        let mut replaced = state.residual_norm();
        let mut it = 0;
        while it < cycles {
            if tol.is_some_and(|t| state.residual_norm() <= t) {
                break;
            }
            it += 1;
            self.smooth(smoother, m, b, &mut state)?;
            observer(l, &state, m);

            let rc = r_mat.transpose_matvec(state.r())?;
            let coarse_tol = self.config.tol.max(self.config.coarse_rel_tol * norm(&rc));
            let (ec, _, _) = self.cycle(
                l + 1,
                &rc,
                vec![0.0; rc.len()],
                self.config.coarse_cycles,
                Some(coarse_tol),
                observer,
            )?;
            state.step(m, r_mat.matvec(&ec)?)?;
            observer(l, &state, m);

            self.smooth(smoother, m, b, &mut state)?;
            observer(l, &state, m);

            history.push(state.residual_norm());
            // Rounding in the updates of x leaves the recursive residual
            // slightly off; refresh it on the finest level.
            if l == 0
                && (tol.is_some_and(|t| state.residual_norm() <= t)
                    || state.residual_norm() <= REPLACE_FACTOR * replaced)
            {
                let r = restrict_residual(m, b, &state.x())?;
                replaced = norm(&r);
                state.replace_residual(r);
                *history.last_mut().expect("history is nonempty") = replaced;
            }
        }
        Ok((state.into_solution(), history, it))
    }

    fn smooth(
        &self,
        smoother: &Schwarz,
        m: &BlockSparseMatrix,
        b: &[f64],
        state: &mut RmState,
    ) -> Result<()> {
        let z = match self.config.smoother_input {
            SmootherInput::Residual => smoother.apply(state.r())?,
            SmootherInput::Rhs => {
                // a full solution candidate, expressed relative to the base point
                let mut z = smoother.apply(b)?;
                for (zi, xi) in z.iter_mut().zip(state.x0()) {
                    *zi -= xi;
                }
                z
            }
        };
        state.step(m, z)?;
        Ok(())
    }
}

fn restrict_residual(m: &BlockSparseMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mx = m.matvec(x)?;
    Ok(b.iter().zip(&mx).map(|(a, c)| a - c).collect())
}
