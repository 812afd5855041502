//! Restarted GMRES with right preconditioning by the global p-multigrid block solver.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, BlockSparseMatrix};
use crate::solvers::{Pmg, SolverConfig, SolverReport};
use crate::xdg::XdgIndexMap;

/// Solves `M x = b` from `x = 0`. The preconditioner is built once and reused.
pub fn gmres_pmg_solve(
    m: &BlockSparseMatrix,
    map: &XdgIndexMap,
    b: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolverReport)> {
    config.validate(map.degrees())?;
    let clock = Instant::now();
    let pmg = Pmg::global(m, map, &config.k_lo, config.pmg_high_order_input)?;
    let (x, mut report) = gmres(m, b, config, |v| pmg.apply(v))?;
    report.solver = "gmres-pmg".into();
    report.solve_ms = clock.elapsed().as_secs_f64() * 1e3;
    Ok((x, report))
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt. The
/// convergence test is made on the true residual `‖b - M x‖₂`.
pub fn gmres(
    m: &BlockSparseMatrix,
    b: &[f64],
    config: &SolverConfig,
    precond: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, SolverReport)> {
    let n = b.len();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: n,
        });
    }
    let restart = config.gmres_restart.max(1);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut beta = norm(&r);
    let mut history = vec![beta];
    let mut iterations = 0;

    while beta > config.tol && iterations < config.max_iter {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut j = 0;
        while j < restart && iterations < config.max_iter {
            let z = precond(&v[j])?;
            let mut w = m.matvec(&z)?;
            zs.push(z);
            for (i, vi) in v.iter().enumerate() {
                h[i][j] = dot(&w, vi);
                axpy(-h[i][j], vi, &mut w);
            }
            h[j + 1][j] = norm(&w);
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                return Err(Error::SingularSystem(
                    "GMRES breakdown with zero Hessenberg column".into(),
                ));
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            let hn = h[j + 1][j];
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            iterations += 1;
            j += 1;
            history.push(g[j].abs());
            if g[j].abs() <= config.tol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; j];
        for i in (0..j).rev() {
            let s: f64 = (i + 1..j).map(|k| h[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&zs) {
            axpy(*yi, zi, &mut x);
        }
        let mx = m.matvec(&x)?;
        r = b.iter().zip(&mx).map(|(a, c)| a - c).collect();
        beta = norm(&r);
        *history.last_mut().expect("history is nonempty") = beta;
    }
    let report = SolverReport {
        solver: "gmres".into(),
        iterations,
        converged: beta <= config.tol,
        final_residual: beta,
        residual_history: history,
        ..Default::default()
    };
    Ok((x, report))
}
