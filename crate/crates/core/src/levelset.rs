//! Level-set fields. `φ < 0` is species A, `φ > 0` is species B and the zero
//! set is the interface.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub trait LevelSet: Send + Sync {
    fn value(&self, x: &[f64; 3]) -> f64;

    /// Analytic gradient, if available. Callers fall back to central differences.
    fn gradient(&self, _x: &[f64; 3]) -> Option<[f64; 3]> {
        None
    }
}

/// `|x - c|^2 - r^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl LevelSet for Sphere {
    fn value(&self, x: &[f64; 3]) -> f64 {
        let mut s = 0.0;
        for d in 0..3 {
            s += (x[d] - self.center[d]).powi(2);
        }
        s - self.radius * self.radius
    }

    fn gradient(&self, x: &[f64; 3]) -> Option<[f64; 3]> {
        Some([
            2.0 * (x[0] - self.center[0]),
            2.0 * (x[1] - self.center[1]),
            2.0 * (x[2] - self.center[2]),
        ])
    }
}

/// `n · x - offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl LevelSet for Plane {
    fn value(&self, x: &[f64; 3]) -> f64 {
        self.normal[0] * x[0] + self.normal[1] * x[1] + self.normal[2] * x[2] - self.offset
    }

    fn gradient(&self, _x: &[f64; 3]) -> Option<[f64; 3]> {
        Some(self.normal)
    }
}

/// `x^2 + y^2 + z^3 - (7/10)^2`, the solver benchmark geometry.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BenchmarkSurface;

impl LevelSet for BenchmarkSurface {
    fn value(&self, x: &[f64; 3]) -> f64 {
        x[0] * x[0] + x[1] * x[1] + x[2] * x[2] * x[2] - 0.49
    }

    fn gradient(&self, x: &[f64; 3]) -> Option<[f64; 3]> {
        Some([2.0 * x[0], 2.0 * x[1], 3.0 * x[2] * x[2]])
    }
}

/// Constant field; the whole domain is a single species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl LevelSet for Constant {
    fn value(&self, _x: &[f64; 3]) -> f64 {
        self.0
    }

    fn gradient(&self, _x: &[f64; 3]) -> Option<[f64; 3]> {
        Some([0.0; 3])
    }
}

/// Level-set from a closure, without an analytic gradient.
pub struct FnLevelSet<F>(pub F);

impl<F> LevelSet for FnLevelSet<F>
where
    F: Fn(&[f64; 3]) -> f64 + Send + Sync,
{
    fn value(&self, x: &[f64; 3]) -> f64 {
        (self.0)(x)
    }
}

/// Built-in level-sets selectable by name, e.g. from a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum NamedLevelSet {
    Sphere(Sphere),
    Plane(Plane),
    Benchmark,
    Constant(f64),
}

impl NamedLevelSet {
    /// Parses `name[:p1,p2,...]`:
    ///
    /// * `sphere:cx,cy,cz,r` (center may be given in 2 components)
    /// * `plane:nx,ny,nz,offset`
    /// * `benchmark`: the jump-coefficient test surface `x² + y² + z³ - 0.49`
    /// * `constant:c`
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, params) = match spec.split_once(':') {
            Some((n, p)) => (n.trim(), p),
            None => (spec.trim(), ""),
        };
        let values: Vec<f64> = if params.trim().is_empty() {
            Vec::new()
        } else {
            params
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("level-set parameter '{s}': {e}")))
                })
                .collect::<Result<_>>()?
        };
        let vec3 = |v: &[f64]| -> [f64; 3] {
            let mut out = [0.0; 3];
            out[..v.len()].copy_from_slice(v);
            out
        };
        match name {
            "sphere" => match values.len() {
                0 => Ok(NamedLevelSet::Sphere(Sphere {
                    center: [0.0; 3],
                    radius: 0.7,
                })),
                3 | 4 => {
                    let (c, r) = values.split_at(values.len() - 1);
                    Ok(NamedLevelSet::Sphere(Sphere {
                        center: vec3(c),
                        radius: r[0],
                    }))
                }
                _ => Err(Error::Parse("sphere expects cx,cy[,cz],r".into())),
            },
            "plane" => match values.len() {
                3 | 4 => {
                    let (n, o) = values.split_at(values.len() - 1);
                    Ok(NamedLevelSet::Plane(Plane {
                        normal: vec3(n),
                        offset: o[0],
                    }))
                }
                _ => Err(Error::Parse("plane expects nx,ny[,nz],offset".into())),
            },
            "paper-benchmark" | "benchmark" => Ok(NamedLevelSet::Benchmark),
            "constant" => match values.as_slice() {
                [c] => Ok(NamedLevelSet::Constant(*c)),
                _ => Err(Error::Parse("constant expects one value".into())),
            },
            other => Err(Error::Parse(format!("unknown level-set '{other}'"))),
        }
    }

    pub fn into_shared(self) -> Arc<dyn LevelSet> {
        match self {
            NamedLevelSet::Sphere(s) => Arc::new(s),
            NamedLevelSet::Plane(p) => Arc::new(p),
            NamedLevelSet::Benchmark => Arc::new(BenchmarkSurface),
            NamedLevelSet::Constant(c) => Arc::new(Constant(c)),
        }
    }
}

impl fmt::Display for NamedLevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NamedLevelSet::Sphere(s) => write!(
                f,
                "sphere:{},{},{},{}",
                s.center[0], s.center[1], s.center[2], s.radius
            ),
            NamedLevelSet::Plane(p) => write!(
                f,
                "plane:{},{},{},{}",
                p.normal[0], p.normal[1], p.normal[2], p.offset
            ),
            NamedLevelSet::Benchmark => write!(f, "benchmark"),
            NamedLevelSet::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

/// Gradient of `phi` at `x`, analytic when available, otherwise by central
/// differences with step `h`.
pub fn gradient_or_fd(phi: &dyn LevelSet, x: &[f64; 3], dim: usize, h: f64) -> [f64; 3] {
    if let Some(g) = phi.gradient(x) {
        let mut g = g;
        for v in g.iter_mut().skip(dim) {
            *v = 0.0;
        }
        return g;
    }
    let mut g = [0.0; 3];
    for d in 0..dim {
        let mut xp = *x;
        let mut xm = *x;
        xp[d] += h;
        xm[d] -= h;
        g[d] = (phi.value(&xp) - phi.value(&xm)) / (2.0 * h);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_builtins() {
        assert_eq!(
            NamedLevelSet::parse("benchmark").unwrap(),
            NamedLevelSet::Benchmark
        );
        let s = NamedLevelSet::parse("sphere:0,0,0.7").unwrap();
        assert_eq!(
            s,
            NamedLevelSet::Sphere(Sphere {
                center: [0.0; 3],
                radius: 0.7
            })
        );
        let p = NamedLevelSet::parse("plane:1,0,0,0.25").unwrap();
        let phi = p.clone().into_shared();
        assert!((phi.value(&[0.5, 0.0, 0.0]) - 0.25).abs() < 1e-15);
        assert_eq!(NamedLevelSet::parse(&p.to_string()).unwrap(), p);
        assert!(NamedLevelSet::parse("torus").is_err());
        assert!(NamedLevelSet::parse("plane:1,x,0").is_err());
    }

    #[test]
    fn finite_difference_fallback() {
        let f = FnLevelSet(|x: &[f64; 3]| x[0] * x[0] + 3.0 * x[1]);
        let g = gradient_or_fd(&f, &[0.3, 0.1, 0.0], 2, 1e-6);
        assert!((g[0] - 0.6).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn benchmark_gradient() {
        let x = [0.1, -0.2, 0.5];
        let g = BenchmarkSurface.gradient(&x).unwrap();
        let fd = gradient_or_fd(
            &FnLevelSet(|x: &[f64; 3]| BenchmarkSurface.value(x)),
            &x,
            3,
            1e-6,
        );
        for d in 0..3 {
            assert!((g[d] - fd[d]).abs() < 1e-8);
        }
    }
}
