//! Gauss rules on intervals, boxes and simplices.

use crate::mesh::Aabb;

/// Quadrature rule in physical coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Per-node unit normals (interface rules only).
    pub normals: Option<Vec<[f64; 3]>>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sum of the weights, i.e. the measure of the integration domain.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(&[f64; 3]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    pub fn append(&mut self, other: QuadRule) {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
        match (&mut self.normals, other.normals) {
            (Some(a), Some(b)) => a.extend(b),
            (None, Some(b)) if self.weights.len() == b.len() => self.normals = Some(b),
            _ => {}
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-type initial guess, refined by Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Number of Gauss points per direction needed for exactness on polynomials of `degree`.
pub fn points_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

/// Gauss rule on `[0, 1]`.
fn unit_interval_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|t| 0.5 * t).collect(),
    )
}

/// Precomputed reference rules for a fixed polynomial degree of exactness.
#[derive(Debug, Clone)]
pub struct ReferenceRules {
    pub degree: usize,
    /// 1D rule on [0,1].
    line: (Vec<f64>, Vec<f64>),
    /// Triangle rule on the unit right triangle: barycentric-free (s, t) coordinates.
    triangle: Vec<([f64; 2], f64)>,
    /// Tetrahedron rule on the unit right tetrahedron: (s, t, u) coordinates.
    tetrahedron: Vec<([f64; 3], f64)>,
}

impl ReferenceRules {
    pub fn new(degree: usize) -> Self {
        let line = unit_interval_rule(points_for_degree(degree));
        // collapsed (Duffy) coordinates: the Jacobian raises the degree in the
        // collapsed directions
        let (a, wa) = unit_interval_rule(points_for_degree(degree + 1));
        let (b, wb) = unit_interval_rule(points_for_degree(degree));
        let mut triangle = Vec::with_capacity(a.len() * b.len());
        for (xi, wxi) in a.iter().zip(&wa) {
            for (eta, weta) in b.iter().zip(&wb) {
                triangle.push(([*xi, eta * (1.0 - xi)], wxi * weta * (1.0 - xi)));
            }
        }
        let (c, wc) = unit_interval_rule(points_for_degree(degree + 2));
        let (d, wd) = unit_interval_rule(points_for_degree(degree + 1));
        let mut tetrahedron = Vec::new();
        for (xi, wxi) in c.iter().zip(&wc) {
            for (eta, weta) in d.iter().zip(&wd) {
                for (zeta, wzeta) in b.iter().zip(&wb) {
                    let s = *xi;
                    let t = eta * (1.0 - xi);
                    let u = zeta * (1.0 - xi) * (1.0 - eta);
                    let jac = (1.0 - xi) * (1.0 - xi) * (1.0 - eta);
                    tetrahedron.push(([s, t, u], wxi * weta * wzeta * jac));
                }
            }
        }
        ReferenceRules {
            degree,
            line,
            triangle,
            tetrahedron,
        }
    }

    /// Tensor Gauss rule on an axis-aligned box; axes listed in `axes` are
    /// integrated, all others are held at `b.lo`.
    pub fn tensor_rule(&self, b: &Aabb, axes: &[usize]) -> QuadRule {
        let (x, w) = &self.line;
        let n = x.len();
        let total = n.pow(axes.len() as u32);
        let mut rule = QuadRule {
            nodes: Vec::with_capacity(total),
            weights: Vec::with_capacity(total),
            normals: None,
        };
        for idx in 0..total {
            let mut p = b.lo;
            let mut weight = 1.0;
            let mut rem = idx;
            for &a in axes {
                let i = rem % n;
                rem /= n;
                p[a] = b.lo[a] + b.width(a) * x[i];
                weight *= w[i] * b.width(a);
            }
            rule.nodes.push(p);
            rule.weights.push(weight);
        }
        rule
    }

    /// Full-dimensional tensor rule on a box.
    pub fn box_rule(&self, b: &Aabb) -> QuadRule {
        let axes: Vec<usize> = (0..b.dim).collect();
        self.tensor_rule(b, &axes)
    }

    /// Rule on a simplex with 2, 3 or 4 vertices, integrating over its own
    /// dimension (segment, triangle or tetrahedron) embedded in 3-space.
    pub fn simplex_rule(&self, verts: &[[f64; 3]], out: &mut QuadRule) {
        match verts.len() {
            2 => {
                let e = sub(&verts[1], &verts[0]);
                let len = norm(&e);
                for (t, w) in self.line.0.iter().zip(&self.line.1) {
                    out.nodes.push(axpy(&verts[0], *t, &e));
                    out.weights.push(w * len);
                }
            }
            3 => {
                let e1 = sub(&verts[1], &verts[0]);
                let e2 = sub(&verts[2], &verts[0]);
                let area2 = norm(&cross(&e1, &e2));
                for ([s, t], w) in &self.triangle {
                    let p = axpy(&axpy(&verts[0], *s, &e1), *t, &e2);
                    out.nodes.push(p);
                    out.weights.push(w * area2);
                }
            }
            4 => {
                let e1 = sub(&verts[1], &verts[0]);
                let e2 = sub(&verts[2], &verts[0]);
                let e3 = sub(&verts[3], &verts[0]);
                let det = dot(&e1, &cross(&e2, &e3)).abs();
                for ([s, t, u], w) in &self.tetrahedron {
                    let p = axpy(&axpy(&axpy(&verts[0], *s, &e1), *t, &e2), *u, &e3);
                    out.nodes.push(p);
                    out.weights.push(w * det);
                }
            }
            n => panic!("simplex with {n} vertices"),
        }
    }
}

pub(crate) fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn axpy(x: &[f64; 3], a: f64, y: &[f64; 3]) -> [f64; 3] {
    [x[0] + a * y[0], x[1] + a * y[1], x[2] + a * y[2]]
}
