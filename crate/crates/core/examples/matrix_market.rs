//! Exports the agglomerated system, reads it back and solves the copy.

use xdgmg::bench::export_matrix;
use xdgmg::linalg::matrix_market::{read_matrix_file, read_vector_file};
use xdgmg::linalg::norm;
use xdgmg::prelude::*;

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("xdgmg-matrix-market");
    std::fs::create_dir_all(&dir)?;
    let (mp, bp) = (dir.join("benchmark.mtx"), dir.join("benchmark_rhs.mtx"));
    let (n, nnz) = export_matrix(&BenchCase::benchmark(2, 3), &mp, &bp)?;
    println!("wrote {} ({n} x {n}, {nnz} nonzeros)", mp.display());

    let m = read_matrix_file(&mp)?;
    let b = read_vector_file(&bp)?;
    let x = DirectFactorization::from_triplets(m.nrows, &m.entries)?.apply(&b)?;
    let r: Vec<f64> = b.iter().zip(m.matvec(&x)).map(|(bi, mi)| bi - mi).collect();
    println!("residual of the re-read system: {:.2e}", norm(&r));
    Ok(())
}
