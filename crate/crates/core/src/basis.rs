//! Orthonormal polynomial bases on axis-aligned boxes.
//!
//! Mode `n` is a product of scaled Legendre polynomials
//! `sqrt((2a+1)/w) P_a(t)` over the axes, restricted to total degree `<= k`.
//! Modes are sorted by total degree, so the modes of degree `<= k_lo` form a prefix.

use nalgebra::DMatrix;

use crate::mesh::Aabb;
use crate::quadrature::gauss_legendre;

/// `binomial(k + dim, dim)`.
pub fn num_modes(degree: usize, dim: usize) -> usize {
    (1..=dim).fold(1, |acc, i| acc * (degree + i) / i)
}

/// Legendre values `P_0..=P_n` and derivatives at `t` in `[-1, 1]`.
pub fn legendre(n: usize, t: f64, p: &mut [f64], dp: &mut [f64]) {
    p[0] = 1.0;
    dp[0] = 0.0;
    if n == 0 {
        return;
    }
    p[1] = t;
    dp[1] = 1.0;
    for m in 2..=n {
        let mf = m as f64;
        p[m] = ((2.0 * mf - 1.0) * t * p[m - 1] - (mf - 1.0) * p[m - 2]) / mf;
        dp[m] = dp[m - 2] + (2.0 * mf - 1.0) * p[m - 1];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBasis {
    dim: usize,
    degree: usize,
    modes: Vec<[usize; 3]>,
}

impl ReferenceBasis {
    pub fn new(degree: usize, dim: usize) -> Self {
        assert!((1..=3).contains(&dim));
        let mut modes = Vec::with_capacity(num_modes(degree, dim));
        for total in 0..=degree {
            // lexicographic within a total degree, last axis slowest
            let mut block = Vec::new();
            let limits = [
                degree,
                if dim > 1 { degree } else { 0 },
                if dim > 2 { degree } else { 0 },
            ];
            for c in 0..=limits[2] {
                for b in 0..=limits[1] {
                    for a in 0..=limits[0] {
                        if a + b + c == total {
                            block.push([a, b, c]);
                        }
                    }
                }
            }
            modes.extend(block);
        }
        ReferenceBasis { dim, degree, modes }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[[usize; 3]] {
        &self.modes
    }

    /// Values and gradients of all modes on `cell` at `x`.
    pub fn eval(&self, cell: &Aabb, x: &[f64; 3], values: &mut [f64], grads: &mut [[f64; 3]]) {
        let k = self.degree;
        let mut p = [[0.0; 16]; 3];
        let mut dp = [[0.0; 16]; 3];
        assert!(k < 16, "degree {k} too large");
        for d in 0..self.dim {
            let w = cell.width(d);
            let t = 2.0 * (x[d] - cell.lo[d]) / w - 1.0;
            legendre(k, t, &mut p[d], &mut dp[d]);
            for a in 0..=k {
                let s = ((2 * a + 1) as f64 / w).sqrt();
                p[d][a] *= s;
                dp[d][a] *= s * 2.0 / w;
            }
        }
        for (n, m) in self.modes.iter().enumerate() {
            let mut v = 1.0;
            let mut g = [1.0, 1.0, 1.0];
            for d in 0..self.dim {
                v *= p[d][m[d]];
                for (e, ge) in g.iter_mut().enumerate().take(self.dim) {
                    *ge *= if e == d { dp[d][m[d]] } else { p[d][m[d]] };
                }
            }
            values[n] = v;
            for (e, ge) in g.iter().enumerate() {
                grads[n][e] = if e < self.dim { *ge } else { 0.0 };
            }
        }
    }

    /// Values only.
    pub fn values(&self, cell: &Aabb, x: &[f64; 3], values: &mut [f64]) {
        let k = self.degree;
        assert!(k < 16, "degree {k} too large");
        let mut p = [[1.0; 16]; 3];
        for d in 0..self.dim {
            let w = cell.width(d);
            let t = 2.0 * (x[d] - cell.lo[d]) / w - 1.0;
            let pd = &mut p[d];
            pd[0] = 1.0;
            if k > 0 {
                pd[1] = t;
            }
            for m in 2..=k {
                let mf = m as f64;
                pd[m] = ((2.0 * mf - 1.0) * t * pd[m - 1] - (mf - 1.0) * pd[m - 2]) / mf;
            }
            for (a, v) in pd.iter_mut().enumerate().take(k + 1) {
                *v *= ((2 * a + 1) as f64 / w).sqrt();
            }
        }
        for (v, m) in values.iter_mut().zip(&self.modes) {
            *v = p[0][m[0]] * p[1][m[1]] * p[2][m[2]];
        }
    }

    /// Matrix `E` with `E[m][n] = ∫_inner φ^inner_m φ^outer_n`, i.e. the
    /// coefficients of the modes on `outer` restricted to `inner` in the
    /// orthonormal basis of `inner`. Exact, since the mode space is invariant
    /// under per-axis affine maps.
    pub fn transfer(&self, outer: &Aabb, inner: &Aabb) -> DMatrix<f64> {
        let k = self.degree;
        let (t, w) = gauss_legendre(k + 1);
        let mut e1 = [[[0.0; 16]; 16]; 3];
        let mut pi = [0.0; 16];
        let mut po = [0.0; 16];
        let mut scratch = [0.0; 16];
        for d in 0..self.dim {
            let (wi, wo) = (inner.width(d), outer.width(d));
            for (tq, wq) in t.iter().zip(&w) {
                let x = inner.lo[d] + 0.5 * (tq + 1.0) * wi;
                legendre(k, *tq, &mut pi, &mut scratch);
                let to = 2.0 * (x - outer.lo[d]) / wo - 1.0;
                legendre(k, to, &mut po, &mut scratch);
                for a in 0..=k {
                    let sa = ((2 * a + 1) as f64 / wi).sqrt();
                    for b in 0..=k {
                        let sb = ((2 * b + 1) as f64 / wo).sqrt();
                        e1[d][a][b] += 0.5 * wi * wq * sa * pi[a] * sb * po[b];
                    }
                }
            }
        }
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            let (mi, mj) = (self.modes[i], self.modes[j]);
            (0..self.dim).map(|d| e1[d][mi[d]][mj[d]]).product()
        })
    }
}
