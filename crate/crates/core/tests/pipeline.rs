use std::path::PathBuf;

use xdgmg::bench::{export_matrix, run_sweep, write_sweep_csv, SWEEP_HEADER};
use xdgmg::linalg::matrix_market::{read_matrix_file, read_vector_file};
use xdgmg::linalg::norm;
use xdgmg::prelude::*;

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("xdgmg-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b)
}

#[test]
fn iterative_solvers_match_direct_on_coarse_benchmark() {
    let disc = Discretization::build(&BenchCase::benchmark(2, 2)).unwrap();
    assert_eq!(disc.dofs(), 160);
    let (xd, rd) = disc.solve(SolverKind::Direct).unwrap();
    assert!(rd.converged);
    for kind in [SolverKind::Omg, SolverKind::GmresPmg] {
        let (x, rep) = disc.solve(kind).unwrap();
        assert!(rep.converged, "{kind}: {rep:?}");
        assert!(rep.final_residual <= 1e-10);
        assert!(rel_diff(&x, &xd) <= 1e-6);
        assert_eq!(rep.residual_history.len(), rep.iterations + 1);
    }
}

#[test]
fn assembly_and_solve_are_deterministic() {
    let case = BenchCase::benchmark(2, 3);
    let a = Discretization::build(&case).unwrap();
    let b = Discretization::build(&case).unwrap();
    assert_eq!(a.matrix().triplets(), b.matrix().triplets());
    assert_eq!(a.rhs(), b.rhs());
    let (xa, ra) = a.solve(SolverKind::Omg).unwrap();
    let (xb, rb) = b.solve(SolverKind::Omg).unwrap();
    assert_eq!(xa, xb);
    assert_eq!(ra.residual_history, rb.residual_history);
}

#[test]
fn multigrid_residual_never_increases() {
    let mut case = BenchCase::benchmark(4, 2);
    case.levels = 3;
    let disc = Discretization::build(&case).unwrap();
    let (_, rep) = disc.solve(SolverKind::Omg).unwrap();
    assert!(rep.converged);
    assert!(rep.residual_history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn manufactured_plane_solution_error_drops_with_refinement() {
    let errors: Vec<f64> = [2, 4]
        .iter()
        .map(|&cells| {
            let mut case = BenchCase::benchmark(cells, 2);
            case.set("exact", "plane-sine").unwrap();
            case.solver = SolverKind::Direct;
            run_case(&case).unwrap().l2_error.unwrap()
        })
        .collect();
    assert!((errors[0] / errors[1]).log2() > 2.7, "{errors:?}");
}

#[test]
fn sweep_csv_round_trip() {
    let base = BenchCase::benchmark(2, 2);
    let rows = run_sweep(&base, &[2], &[1, 2], &[SolverKind::Omg, SolverKind::Direct]).unwrap();
    assert_eq!(rows.len(), 4);
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    let mut rd = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(
        rd.headers().unwrap().iter().collect::<Vec<_>>(),
        SWEEP_HEADER.to_vec()
    );
    let records: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), 4);
    for (rec, row) in records.iter().zip(&rows) {
        let res = row.result.as_ref().unwrap();
        assert_eq!(&rec[0], "2^3");
        assert_eq!(rec[2].parse::<usize>().unwrap(), res.dofs);
        assert_eq!(&rec[5], "true");
        assert_eq!(rec[9].parse::<f64>().unwrap(), res.report.final_residual);
        assert!(rec[12].is_empty());
    }
}

#[test]
fn matrix_market_export_reads_back() {
    let case = BenchCase::benchmark(2, 2);
    let dir = scratch_dir("export");
    let (mp, rp) = (dir.join("m.mtx"), dir.join("b.mtx"));
    let (n, nnz) = export_matrix(&case, &mp, &rp).unwrap();

    let disc = Discretization::build(&case).unwrap();
    let coo = read_matrix_file(&mp).unwrap();
    let b = read_vector_file(&rp).unwrap();
    assert_eq!((coo.nrows, coo.ncols), (n, n));
    assert_eq!(coo.entries.len(), nnz);
    assert_eq!(n, disc.dofs_agglomerated());
    let diff = (coo.to_dense() - disc.matrix().to_dense()).abs().max();
    assert!(diff <= 1e-15 * disc.matrix().max_abs());
    assert_eq!(b, disc.rhs());
    std::fs::remove_dir_all(dir).unwrap();
}
