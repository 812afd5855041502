//! Block-sparse matrices, dense direct factorizations, MatrixMarket I/O and
//! small vector helpers.

mod block;
mod direct;
pub mod matrix_market;

pub use block::BlockSparseMatrix;
pub use direct::{factorizations_on_this_thread, DirectFactorization};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `b - a`
pub fn sub(b: &[f64], a: &[f64]) -> Vec<f64> {
    b.iter().zip(a).map(|(x, y)| x - y).collect()
}

pub fn gather(x: &[f64], indices: &[usize]) -> Vec<f64> {
    indices.iter().map(|&i| x[i]).collect()
}

pub fn scatter_add(values: &[f64], indices: &[usize], y: &mut [f64]) {
    for (v, &i) in values.iter().zip(indices) {
        y[i] += v;
    }
}
