use std::cell::Cell;

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Lu as SparseLu;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::linalg::BlockSparseMatrix;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of [`DirectFactorization`]s created on the current thread.
pub fn factorizations_on_this_thread() -> usize {
    FACTORIZATIONS.with(Cell::get)
}

/// Systems up to this size are factored densely by [`DirectFactorization::from_triplets`].
pub const DENSE_LIMIT: usize = 1500;

#[derive(Debug, Clone)]
enum Factor {
    Dense(LU<f64, Dyn, Dyn>),
    Sparse(SparseLu<usize, f64>),
}

/// LU factorization with partial pivoting, reusable for many right-hand sides.
/// Small systems use a dense factorization, large ones a sparse one.
#[derive(Debug, Clone)]
pub struct DirectFactorization {
    factor: Factor,
    dim: usize,
    applications: Cell<usize>,
}

impl DirectFactorization {
    /// Dense factorization of `matrix`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.ncols(),
            });
        }
        let scale = matrix.amax();
        let lu = matrix.lu();
        let u = lu.u();
        let tiny = (0..n)
            .map(|i| u[(i, i)].abs())
            .fold(f64::INFINITY, f64::min);
        if n > 0 && (scale == 0.0 || !tiny.is_finite() || tiny <= 1e-14 * scale) {
            return Err(Error::SingularSystem(format!(
                "pivot {tiny:e} relative to max entry {scale:e}"
            )));
        }
        Ok(Self::counted(Factor::Dense(lu), n))
    }

    /// Sparse factorization of the `n × n` matrix given by 0-based triplets
    /// (duplicates are summed).
    pub fn sparse(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let triplets: Vec<Triplet<usize, usize, f64>> = entries
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::InvalidInput(format!("sparse matrix: {e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::SingularSystem(format!("sparse LU: {e:?}")))?;
        Ok(Self::counted(Factor::Sparse(lu), n))
    }

    /// Dense or sparse depending on [`DENSE_LIMIT`].
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        if n <= DENSE_LIMIT {
            let mut d = DMatrix::zeros(n, n);
            for &(r, c, v) in entries {
                d[(r, c)] += v;
            }
            Self::new(d)
        } else {
            Self::sparse(n, entries)
        }
    }

    pub fn from_block_sparse(m: &BlockSparseMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        Self::from_triplets(m.nrows(), &m.triplets())
    }

    fn counted(factor: Factor, dim: usize) -> Self {
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        DirectFactorization {
            factor,
            dim,
            applications: Cell::new(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.factor, Factor::Sparse(_))
    }

    /// Solves `M x = b`.
    pub fn apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: b.len(),
            });
        }
        let x: Vec<f64> = match &self.factor {
            Factor::Dense(lu) => {
                let mut x = DVector::from_column_slice(b);
                if !lu.solve_mut(&mut x) {
                    return Err(Error::SingularSystem("LU solve failed".into()));
                }
                x.data.into()
            }
            Factor::Sparse(lu) => {
                let rhs = faer::Col::<f64>::from_fn(self.dim, |i| b[i]);
                let x = lu.solve(&rhs);
                (0..self.dim).map(|i| x[i]).collect()
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("non-finite solution".into()));
        }
        self.applications.set(self.applications.get() + 1);
        Ok(x)
    }

    /// Number of solves performed with this factorization.
    pub fn applications(&self) -> usize {
        self.applications.get()
    }
}
