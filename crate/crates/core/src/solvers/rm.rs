//! Residual minimization over accumulated correction candidates.
//!
//! The state keeps `W` with orthonormal columns and `Z` with `W = M Z`. A new
//! candidate `z` is orthogonalized through its image `M z`, and the iterate is
//! the minimizer of `‖b - M x‖₂` over `x₀ + span(Z)`. The correction
//! `x - x₀` is stored separately from `x₀` so that its rounding error scales
//! with the correction rather than with the full iterate.

use crate::error::Result;
use crate::linalg::{axpy, dot, norm, BlockSparseMatrix};

/// Candidates whose orthogonalized image falls below this fraction of `‖M z‖` are rejected.
pub const DEPENDENCE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmOutcome {
    Accepted,
    /// Candidate lies (numerically) in the current search space; state unchanged.
    Dependent,
}

#[derive(Debug, Clone)]
pub struct RmState {
    w: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    x0: Vec<f64>,
    r0: Vec<f64>,
    dx: Vec<f64>,
    r: Vec<f64>,
    max_columns: usize,
}

impl RmState {
    /// Starts at `x0` with residual `r0 = b - M x0`.
    pub fn new(x0: Vec<f64>, r0: Vec<f64>, max_columns: usize) -> Self {
        RmState {
            w: Vec::new(),
            z: Vec::new(),
            alpha: Vec::new(),
            dx: vec![0.0; x0.len()],
            r: r0.clone(),
            x0,
            r0,
            max_columns: max_columns.max(1),
        }
    }

    /// The iterate `x₀ + Σ αᵢ zᵢ`.
    pub fn x(&self) -> Vec<f64> {
        self.x0.iter().zip(&self.dx).map(|(a, d)| a + d).collect()
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn residual_norm(&self) -> f64 {
        norm(&self.r)
    }

    pub fn w(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn z(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn r0(&self) -> &[f64] {
        &self.r0
    }

    pub fn num_columns(&self) -> usize {
        self.w.len()
    }

    pub fn into_solution(self) -> Vec<f64> {
        self.x()
    }

    fn rebase(&mut self) {
        self.x0 = self.x();
        self.dx.iter_mut().for_each(|d| *d = 0.0);
    }

    /// Replaces the recursively updated residual by `r = b - M x` computed
    /// afresh. The base point moves to the current iterate and the stored
    /// coefficients are zeroed; `W` and `Z` are kept.
    pub fn replace_residual(&mut self, r: Vec<f64>) {
        debug_assert_eq!(r.len(), self.r.len());
        self.rebase();
        self.r0.clone_from(&r);
        self.r = r;
        self.alpha.iter_mut().for_each(|a| *a = 0.0);
    }

    /// Adds candidate `z` to the search space and updates `x` and `r`. The
    /// image is recomputed after orthogonalization so that `r = b - M x`
    /// holds to rounding even when the columns of `Z` are badly scaled.
    pub fn step(&mut self, m: &BlockSparseMatrix, z: Vec<f64>) -> Result<RmOutcome> {
        let mut w = m.matvec(&z)?;
        let image_norm = norm(&w);
        let mut z = z;
        // the second round only removes the small loss of orthogonality from the first
        for _ in 0..2 {
            let Some((zo, _)) = self.orthogonalize(z, w, image_norm) else {
                return Ok(RmOutcome::Dependent);
            };
            z = zo;
            w = m.matvec(&z)?;
        }
        let wn = norm(&w);
        if wn < DEPENDENCE_TOL * image_norm {
            return Ok(RmOutcome::Dependent);
        }
        Ok(self.accept(z, w, wn))
    }

    /// As [`RmState::step`] with a precomputed image `w = M z`.
    pub fn step_with_image(&mut self, z: Vec<f64>, w: Vec<f64>) -> Result<RmOutcome> {
        let image_norm = norm(&w);
        match self.orthogonalize(z, w, image_norm) {
            Some((z, w)) => {
                let wn = norm(&w);
                Ok(self.accept(z, w, wn))
            }
            None => Ok(RmOutcome::Dependent),
        }
    }

    /// Modified Gram-Schmidt, applied twice; `None` if the candidate is dependent.
    fn orthogonalize(
        &self,
        mut z: Vec<f64>,
        mut w: Vec<f64>,
        image_norm: f64,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        if image_norm == 0.0 || !image_norm.is_finite() {
            return None;
        }
        for _ in 0..2 {
            for (wi, zi) in self.w.iter().zip(&self.z) {
                let c = dot(wi, &w);
                axpy(-c, wi, &mut w);
                axpy(-c, zi, &mut z);
            }
        }
        (norm(&w) >= DEPENDENCE_TOL * image_norm).then_some((z, w))
    }

    fn accept(&mut self, mut z: Vec<f64>, mut w: Vec<f64>, wn: f64) -> RmOutcome {
        for v in w.iter_mut() {
            *v /= wn;
        }
        for v in z.iter_mut() {
            *v /= wn;
        }
        if self.w.len() == self.max_columns {
            self.rebase();
            self.r0.clone_from(&self.r);
            self.w.clear();
            self.z.clear();
            self.alpha.clear();
        }
        let before = norm(&self.r);
        let a = dot(&w, &self.r);
        let mut r = self.r.clone();
        axpy(-a, &w, &mut r);
        // keep the search direction but skip an update that rounding made worse
        let a = if norm(&r) > before { 0.0 } else { a };
        if a != 0.0 {
            self.r = r;
            axpy(a, &z, &mut self.dx);
        }
        self.w.push(w);
        self.z.push(z);
        self.alpha.push(a);
        RmOutcome::Accepted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DirectFactorization;
    use nalgebra::DMatrix;

    fn system() -> (BlockSparseMatrix, Vec<f64>) {
        let n = 12;
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                4.0 + i as f64
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        let m = BlockSparseMatrix::from_dense(&d, vec![0, 4, 8, 12], vec![0, 4, 8, 12]);
        (m, (0..n).map(|i| 1.0 + (i % 3) as f64).collect())
    }

    fn check_invariants(s: &RmState, m: &BlockSparseMatrix) {
        for (i, wi) in s.w().iter().enumerate() {
            for (j, wj) in s.w().iter().enumerate() {
                let e = dot(wi, wj) - if i == j { 1.0 } else { 0.0 };
                assert!(e.abs() <= 1e-11);
            }
            let mz = m.matvec(&s.z()[i]).unwrap();
            let dev = mz
                .iter()
                .zip(wi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(dev <= 1e-11 * m.max_abs());
            assert!(dot(wi, s.r()).abs() <= 1e-10);
        }
    }

    #[test]
    fn exact_candidate_zeroes_residual() {
        let (m, b) = system();
        let x = DirectFactorization::from_block_sparse(&m)
            .unwrap()
            .apply(&b)
            .unwrap();
        let mut s = RmState::new(vec![0.0; 12], b.clone(), 10);
        assert_eq!(s.step(&m, x).unwrap(), RmOutcome::Accepted);
        assert!(s.residual_norm() <= 1e-12 * norm(&b));
    }

    #[test]
    fn zero_and_repeated_candidates_are_dependent() {
        let (m, b) = system();
        let mut s = RmState::new(vec![0.0; 12], b.clone(), 10);
        assert_eq!(s.step(&m, vec![0.0; 12]).unwrap(), RmOutcome::Dependent);
        let z: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        assert_eq!(s.step(&m, z.clone()).unwrap(), RmOutcome::Accepted);
        let before = (s.x(), s.num_columns());
        assert_eq!(s.step(&m, z).unwrap(), RmOutcome::Dependent);
        assert_eq!((s.x(), s.num_columns()), before);
    }

    #[test]
    fn invariants_and_monotone_residual() {
        let (m, b) = system();
        let mut s = RmState::new(vec![0.0; 12], b.clone(), 50);
        let mut last = s.residual_norm();
        for k in 0..8 {
            let z: Vec<f64> = (0..12).map(|i| ((i * (k + 2)) as f64).cos()).collect();
            s.step(&m, z).unwrap();
            check_invariants(&s, &m);
            assert!(s.residual_norm() <= last);
            last = s.residual_norm();
            let true_r: Vec<f64> = b
                .iter()
                .zip(m.matvec(&s.x()).unwrap())
                .map(|(a, c)| a - c)
                .collect();
            let drift = true_r
                .iter()
                .zip(s.r())
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
            assert!(drift <= 1e-12 * norm(&b));
        }
    }

    #[test]
    fn column_cap_restarts_from_current_iterate() {
        let (m, b) = system();
        let mut s = RmState::new(vec![0.0; 12], b, 3);
        for k in 0..5 {
            let z: Vec<f64> = (0..12).map(|i| ((i + k) as f64).sqrt()).collect();
            s.step(&m, z).unwrap();
            assert!(s.num_columns() <= 3);
        }
        assert_eq!(s.num_columns(), 2);
        assert_ne!(s.x0(), &[0.0; 12][..]);
    }
}
