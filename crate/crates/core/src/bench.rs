//! Benchmark harness: problem setup, solves, sweeps, matrix-operation timings
//! and matrix export. The `xdgmg` binary is a thin front end over this module.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::cutcell::{CutCellMesh, GeometryConfig};
use crate::error::{Error, Result};
use crate::levelset::NamedLevelSet;
use crate::linalg::matrix_market::{write_matrix_file, write_vector_file, CooMatrix};
use crate::linalg::{norm, BlockSparseMatrix, DirectFactorization};
use crate::mesh::BackgroundMesh;
use crate::multigrid::{
    small_cell_agglomeration_map, CutAggregationMap, Hierarchy, HierarchyConfig,
};
use crate::sip::{
    assemble_rhs_raw, assemble_sip_raw, l2_error_raw, PenaltyConfig, PenaltyScales, PoissonProblem,
};
use crate::solvers::{gmres_pmg_solve, OrthoMultigrid, SolverConfig, SolverReport};
use crate::xdg::XdgIndexMap;
use crate::Species;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Direct,
    Omg,
    GmresPmg,
}

impl SolverKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "direct" => Ok(SolverKind::Direct),
            "omg" => Ok(SolverKind::Omg),
            "gmres-pmg" | "gmres" => Ok(SolverKind::GmresPmg),
            other => Err(Error::Parse(format!(
                "unknown solver '{other}' (direct, omg, gmres-pmg)"
            ))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Direct => "direct",
            SolverKind::Omg => "omg",
            SolverKind::GmresPmg => "gmres-pmg",
        })
    }
}

/// Exact solutions with homogeneous interface conditions, for error studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Manufactured {
    /// `u = (|x|² - R²)/μ`, interface `|x| = R`, `f = -2D`.
    Sphere { radius: f64 },
    /// `u = (x - c)/μ · h(y, z)` with `h = sin y` (2D) or `sin y cos z` (3D), interface `x = c`.
    PlaneSine { offset: f64 },
}

impl Manufactured {
    pub fn parse(s: &str) -> Result<Option<Self>> {
        let (name, p) = s.split_once(':').unwrap_or((s, ""));
        let value = |default: f64| -> Result<f64> {
            if p.trim().is_empty() {
                Ok(default)
            } else {
                p.trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("exact-solution parameter '{p}': {e}")))
            }
        };
        match name.trim() {
            "none" | "" => Ok(None),
            "sphere" => Ok(Some(Manufactured::Sphere {
                radius: value(0.7)?,
            })),
            "plane-sine" => Ok(Some(Manufactured::PlaneSine {
                offset: value(0.1)?,
            })),
            other => Err(Error::Parse(format!("unknown exact solution '{other}'"))),
        }
    }

    /// Level-set whose zero set is this solution's interface.
    pub fn level_set(&self) -> NamedLevelSet {
        match *self {
            Manufactured::Sphere { radius } => NamedLevelSet::Sphere(crate::levelset::Sphere {
                center: [0.0; 3],
                radius,
            }),
            Manufactured::PlaneSine { offset } => NamedLevelSet::Plane(crate::levelset::Plane {
                normal: [1.0, 0.0, 0.0],
                offset,
            }),
        }
    }

    pub fn value(&self, x: &[f64; 3], mu: f64, dim: usize) -> f64 {
        match *self {
            Manufactured::Sphere { radius } => {
                let r2: f64 = x[..dim].iter().map(|v| v * v).sum();
                (r2 - radius * radius) / mu
            }
            Manufactured::PlaneSine { offset } => (x[0] - offset) / mu * tangential(x, dim),
        }
    }

    pub fn source(&self, x: &[f64; 3], dim: usize) -> f64 {
        match *self {
            Manufactured::Sphere { .. } => -2.0 * dim as f64,
            Manufactured::PlaneSine { offset } => {
                (dim as f64 - 1.0) * (x[0] - offset) * tangential(x, dim)
            }
        }
    }

    /// Problem with this source and Dirichlet data on every face.
    pub fn problem(&self, dim: usize, mu_a: f64, mu_b: f64) -> Result<PoissonProblem> {
        let me = *self;
        let mu = [mu_a, mu_b];
        Ok(PoissonProblem::new(dim, mu_a, mu_b)?
            .with_source(Arc::new(move |x, _| me.source(x, dim)))
            .with_dirichlet(Arc::new(move |x, s: Species| {
                me.value(x, mu[s.index()], dim)
            })))
    }
}

impl fmt::Display for Manufactured {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Manufactured::Sphere { radius } => write!(f, "sphere:{radius}"),
            Manufactured::PlaneSine { offset } => write!(f, "plane-sine:{offset}"),
        }
    }
}

fn tangential(x: &[f64; 3], dim: usize) -> f64 {
    if dim == 3 {
        x[1].sin() * x[2].cos()
    } else {
        x[1].sin()
    }
}

/// One benchmark configuration. Unset optional fields take degree-dependent defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub dim: usize,
    pub cells: usize,
    pub degree: usize,
    pub mu_a: f64,
    pub mu_b: f64,
    pub alpha: Option<f64>,
    pub levelset: NamedLevelSet,
    pub solver: SolverKind,
    pub tol: f64,
    pub k_lo: Option<usize>,
    pub levels: usize,
    pub max_iter: usize,
    pub quad_depth: Option<usize>,
    pub gauss_order: Option<usize>,
    pub schwarz_target_dofs: usize,
    pub gmres_restart: usize,
    pub c_eta: f64,
    pub exact: Option<Manufactured>,
    /// Domain `(lo, hi)^dim`.
    pub domain: (f64, f64),
}

impl Default for BenchCase {
    fn default() -> Self {
        BenchCase {
            dim: 3,
            cells: 4,
            degree: 2,
            mu_a: 1.0,
            mu_b: 1000.0,
            alpha: None,
            levelset: NamedLevelSet::Benchmark,
            solver: SolverKind::Omg,
            tol: 1e-10,
            k_lo: None,
            levels: 3,
            max_iter: 1000,
            quad_depth: None,
            gauss_order: None,
            schwarz_target_dofs: 2000,
            gmres_restart: 30,
            c_eta: PenaltyConfig::default().c_eta,
            exact: None,
            domain: (-1.0, 1.0),
        }
    }
}

impl BenchCase {
    /// The solver benchmark on `cells³` cells with degree `k`.
    pub fn benchmark(cells: usize, k: usize) -> Self {
        BenchCase {
            cells,
            degree: k,
            ..Default::default()
        }
    }

    /// `0.3` for `k >= 5`, else `0.1`.
    pub fn alpha(&self) -> f64 {
        self.alpha
            .unwrap_or(if self.degree >= 5 { 0.3 } else { 0.1 })
    }

    /// `3` for `k >= 5`, else `min(k, 1)`.
    pub fn k_lo(&self) -> usize {
        self.k_lo.unwrap_or(if self.degree >= 5 {
            3
        } else {
            self.degree.min(1)
        })
    }

    pub fn geometry(&self) -> GeometryConfig {
        let depth = self.quad_depth.unwrap_or(if self.dim == 3 { 2 } else { 3 });
        GeometryConfig::new(depth, self.gauss_order.unwrap_or(2 * self.degree + 2))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            k_lo: vec![self.k_lo()],
            schwarz_target_dofs: self.schwarz_target_dofs,
            gmres_restart: self.gmres_restart,
            ..Default::default()
        }
    }

    pub fn problem(&self) -> Result<PoissonProblem> {
        match &self.exact {
            Some(m) => m.problem(self.dim, self.mu_a, self.mu_b),
            None => Ok(PoissonProblem::new(self.dim, self.mu_a, self.mu_b)?
                .with_source(crate::sip::constant_field(1.0))),
        }
    }

    /// Sets one field from a `key=value` pair; keys match the CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            v.trim()
                .parse()
                .map_err(|e| Error::Parse(format!("{key}: {e}")))
        }
        match key.trim() {
            "dim" => self.dim = num(key, value)?,
            "cells" => self.cells = num(key, value)?,
            "degree" => self.degree = num(key, value)?,
            "mu-a" => self.mu_a = num(key, value)?,
            "mu-b" => self.mu_b = num(key, value)?,
            "alpha" => self.alpha = Some(num(key, value)?),
            "levelset" => self.levelset = NamedLevelSet::parse(value)?,
            "solver" => self.solver = SolverKind::parse(value)?,
            "tol" => self.tol = num(key, value)?,
            "klo" => self.k_lo = Some(num(key, value)?),
            "levels" => self.levels = num(key, value)?,
            "max-iter" => self.max_iter = num(key, value)?,
            "quad-depth" => self.quad_depth = Some(num(key, value)?),
            "gauss-order" => self.gauss_order = Some(num(key, value)?),
            "schwarz-dofs" => self.schwarz_target_dofs = num(key, value)?,
            "restart" => self.gmres_restart = num(key, value)?,
            "c-eta" => self.c_eta = num(key, value)?,
            "exact" => {
                self.exact = Manufactured::parse(value)?;
                if let Some(m) = &self.exact {
                    self.levelset = m.level_set();
                }
            }
            "domain" => {
                let (lo, hi) = value
                    .split_once(',')
                    .ok_or_else(|| Error::Parse("domain expects lo,hi".into()))?;
                self.domain = (num(key, lo)?, num(key, hi)?);
            }
            other => return Err(Error::Parse(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a line-based `key=value` config; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::InvalidConfig(format!(
                "dim must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.cells == 0 || self.levels == 0 {
            return Err(Error::InvalidConfig(
                "cells and levels must be positive".into(),
            ));
        }
        let a = self.alpha();
        if !(0.0..1.0).contains(&a) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1), got {a}"
            )));
        }
        if self.k_lo() > self.degree {
            return Err(Error::InvalidConfig(format!(
                "klo {} exceeds degree {}",
                self.k_lo(),
                self.degree
            )));
        }
        self.solver_config().validate(&[self.degree])
    }
}

/// Wall-clock times of the stages before the hierarchy.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SetupTimings {
    pub geometry_ms: f64,
    pub assembly_ms: f64,
}

/// Everything up to the solve: geometry, spaces, agglomeration, assembly and hierarchy.
pub struct Discretization {
    pub case: BenchCase,
    pub cutmesh: CutCellMesh,
    pub agglomeration: CutAggregationMap,
    pub raw_map: XdgIndexMap,
    pub raw_matrix: BlockSparseMatrix,
    pub raw_rhs: Vec<f64>,
    pub hierarchy: Hierarchy,
    pub timings: SetupTimings,
}

impl Discretization {
    pub fn build(case: &BenchCase) -> Result<Self> {
        case.validate()?;
        let clock = Instant::now();
        let d = case.dim;
        let (lo, hi) = case.domain;
        let mesh =
            BackgroundMesh::build_cartesian(d, &vec![lo; d], &vec![hi; d], &vec![case.cells; d])?;
        let cutmesh = CutCellMesh::classify_and_build(
            &mesh,
            case.levelset.clone().into_shared(),
            case.geometry(),
        )?;
        let geometry_ms = clock.elapsed().as_secs_f64() * 1e3;

        let clock = Instant::now();
        let agglomeration = small_cell_agglomeration_map(&cutmesh, case.alpha())?;
        let raw_map = XdgIndexMap::build(&cutmesh, &[case.degree])?;
        let scales = PenaltyScales::new(&cutmesh, &agglomeration.aggregates(&cutmesh)?)?;
        let penalty = PenaltyConfig { c_eta: case.c_eta };
        let problem = case.problem()?;
        let raw_matrix = assemble_sip_raw(&cutmesh, &raw_map, &problem, &penalty, &scales)?;
        let raw_rhs = assemble_rhs_raw(&cutmesh, &raw_map, &problem, &penalty, &scales)?;
        let assembly_ms = clock.elapsed().as_secs_f64() * 1e3;

        let hierarchy = Hierarchy::build(
            &cutmesh,
            &agglomeration,
            &raw_map,
            &raw_matrix,
            &raw_rhs,
            &HierarchyConfig {
                levels: case.levels,
            },
        )?;
        Ok(Discretization {
            case: case.clone(),
            cutmesh,
            agglomeration,
            raw_map,
            raw_matrix,
            raw_rhs,
            hierarchy,
            timings: SetupTimings {
                geometry_ms,
                assembly_ms,
            },
        })
    }

    /// DOFs before agglomeration.
    pub fn dofs(&self) -> usize {
        self.raw_map.len()
    }

    /// DOFs of the agglomerated system that the solvers see.
    pub fn dofs_agglomerated(&self) -> usize {
        self.hierarchy.level(0).len()
    }

    pub fn matrix(&self) -> &BlockSparseMatrix {
        &self.hierarchy.level(0).matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.hierarchy.level(0).rhs
    }

    /// Solves the agglomerated system with the given solver.
    pub fn solve(&self, kind: SolverKind) -> Result<(Vec<f64>, SolverReport)> {
        let config = self.case.solver_config();
        let m = self.matrix();
        let b = self.rhs();
        let timings = self.hierarchy.timings();
        let (x, mut report) = match kind {
            SolverKind::Direct => {
                let clock = Instant::now();
                let x = DirectFactorization::from_block_sparse(m)?.apply(b)?;
                let mx = m.matvec(&x)?;
                let res = norm(&b.iter().zip(&mx).map(|(a, c)| a - c).collect::<Vec<_>>());
                let report = SolverReport {
                    solver: "direct".into(),
                    iterations: 1,
                    converged: res <= config.tol.max(1e-12 * norm(b)),
                    final_residual: res,
                    residual_history: vec![norm(b), res],
                    solve_ms: clock.elapsed().as_secs_f64() * 1e3,
                    ..Default::default()
                };
                (x, report)
            }
            SolverKind::Omg => OrthoMultigrid::new(&self.hierarchy, &config)?.solve(None)?,
            SolverKind::GmresPmg => {
                gmres_pmg_solve(m, &self.hierarchy.level(0).index_map, b, &config)?
            }
        };
        report.setup_basis_ms = timings.basis_ms;
        report.setup_matmat_ms = timings.matmat_ms;
        Ok((x, report))
    }

    /// L² error of an agglomerated-level solution against the case's exact solution.
    pub fn l2_error(&self, x: &[f64]) -> Result<Option<f64>> {
        let Some(exact) = self.case.exact else {
            return Ok(None);
        };
        let raw = self.hierarchy.to_raw(0, x)?;
        let (mu, dim) = ([self.case.mu_a, self.case.mu_b], self.case.dim);
        let f = move |p: &[f64; 3], s: Species| exact.value(p, mu[s.index()], dim);
        Ok(Some(l2_error_raw(&raw, &f, &self.cutmesh, &self.raw_map)?))
    }
}

/// Result of [`run_case`].
#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub dofs: usize,
    pub dofs_agglomerated: usize,
    pub levels: usize,
    pub report: SolverReport,
    pub l2_error: Option<f64>,
    pub setup: SetupTimings,
    pub solution_norm: f64,
}

pub fn run_case(case: &BenchCase) -> Result<CaseResult> {
    let disc = Discretization::build(case)?;
    let (x, report) = disc.solve(case.solver)?;
    Ok(CaseResult {
        dofs: disc.dofs(),
        dofs_agglomerated: disc.dofs_agglomerated(),
        levels: disc.hierarchy.num_levels(),
        l2_error: disc.l2_error(&x)?,
        solution_norm: norm(&x),
        report,
        setup: disc.timings,
    })
}

pub const SWEEP_HEADER: [&str; 13] = [
    "grid",
    "k",
    "dofs",
    "solver",
    "iterations",
    "converged",
    "setup_basis_ms",
    "setup_matmat_ms",
    "solve_ms",
    "final_residual",
    "l2_error",
    "dofs_agglomerated",
    "error",
];

/// One sweep row; `error` holds the message of a failed case.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cells: usize,
    pub dim: usize,
    pub degree: usize,
    pub solver: SolverKind,
    pub result: std::result::Result<CaseResult, String>,
}

impl SweepRow {
    pub fn record(&self) -> Vec<String> {
        let grid = format!("{}^{}", self.cells, self.dim);
        let mut rec = vec![grid, self.degree.to_string()];
        match &self.result {
            Ok(r) => rec.extend([
                r.dofs.to_string(),
                self.solver.to_string(),
                r.report.iterations.to_string(),
                r.report.converged.to_string(),
                format!("{:.3}", r.report.setup_basis_ms),
                format!("{:.3}", r.report.setup_matmat_ms),
                format!("{:.3}", r.report.solve_ms),
                format!("{:e}", r.report.final_residual),
                r.l2_error.map(|e| format!("{e:e}")).unwrap_or_default(),
                r.dofs_agglomerated.to_string(),
                String::new(),
            ]),
            Err(msg) => {
                rec.extend([String::new(), self.solver.to_string()]);
                rec.extend(std::iter::repeat_n(String::new(), 8));
                rec.push(msg.clone());
            }
        }
        rec
    }
}

/// Runs every (grid, degree, solver) combination on top of `base`; failures
/// are recorded per row.
pub fn run_sweep(
    base: &BenchCase,
    grids: &[usize],
    degrees: &[usize],
    solvers: &[SolverKind],
) -> Result<Vec<SweepRow>> {
    if grids.is_empty() || degrees.is_empty() || solvers.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs at least one grid, degree and solver".into(),
        ));
    }
    let mut rows = Vec::new();
    for &cells in grids {
        for &degree in degrees {
            let case = BenchCase {
                cells,
                degree,
                ..base.clone()
            };
            // one discretization per (grid, degree), shared by the solvers
            let disc = Discretization::build(&case);
            for &solver in solvers {
                let result = match &disc {
                    Ok(d) => d
                        .solve(solver)
                        .and_then(|(x, report)| {
                            Ok(CaseResult {
                                dofs: d.dofs(),
                                dofs_agglomerated: d.dofs_agglomerated(),
                                levels: d.hierarchy.num_levels(),
                                l2_error: d.l2_error(&x)?,
                                solution_norm: norm(&x),
                                report,
                                setup: d.timings,
                            })
                        })
                        .map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                };
                rows.push(SweepRow {
                    cells,
                    dim: case.dim,
                    degree,
                    solver,
                    result,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Timing of one matrix operation.
#[derive(Debug, Clone, PartialEq)]
pub struct MatOpTiming {
    pub op: &'static str,
    pub repetitions: usize,
    pub median_ms: f64,
    pub dofs: usize,
    pub nonzero_rows: usize,
    pub nnz: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median time of `repetitions` matrix-vector products and of one
/// matrix-matrix product `M Mᵀ`, on the agglomerated matrix of `case`.
pub fn micro_bench_matops(case: &BenchCase, repetitions: usize) -> Result<Vec<MatOpTiming>> {
    let disc = Discretization::build(case)?;
    Ok(time_matops(disc.matrix(), repetitions))
}

pub fn time_matops(m: &BlockSparseMatrix, repetitions: usize) -> Vec<MatOpTiming> {
    let reps = repetitions.max(1);
    let x: Vec<f64> = (0..m.ncols())
        .map(|i| 1.0 + (i % 17) as f64 * 0.01)
        .collect();
    let mut y = vec![0.0; m.nrows()];
    let times: Vec<f64> = (0..reps)
        .map(|_| {
            let clock = Instant::now();
            m.matvec_into(&x, &mut y);
            clock.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    let mt = m.transpose();
    let clock = Instant::now();
    let product = m.matmat(&mt).expect("square matrix");
    let matmat_ms = clock.elapsed().as_secs_f64() * 1e3;
    std::hint::black_box((&y, &product));
    let info = |op, repetitions, median_ms| MatOpTiming {
        op,
        repetitions,
        median_ms,
        dofs: m.nrows(),
        nonzero_rows: m.nonzero_rows(),
        nnz: m.nnz(),
    };
    vec![
        info("matvec", reps, median(times)),
        info("matmat", 1, matmat_ms),
    ]
}

pub fn write_matops_csv<W: Write>(rows: &[MatOpTiming], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "op",
        "repetitions",
        "median_ms",
        "dofs",
        "nonzero_rows",
        "nnz",
    ])?;
    for r in rows {
        w.write_record([
            r.op.to_string(),
            r.repetitions.to_string(),
            format!("{:.6}", r.median_ms),
            r.dofs.to_string(),
            r.nonzero_rows.to_string(),
            r.nnz.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the agglomerated matrix to `matrix_path` and its right-hand side
/// to `rhs_path` in MatrixMarket format.
pub fn export_matrix(
    case: &BenchCase,
    matrix_path: &Path,
    rhs_path: &Path,
) -> Result<(usize, usize)> {
    let disc = Discretization::build(case)?;
    let coo = CooMatrix::from(disc.matrix());
    write_matrix_file(&coo, matrix_path)?;
    write_vector_file(disc.rhs(), rhs_path)?;
    Ok((coo.nrows, coo.entries.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_defaults_follow_degree() {
        let c = BenchCase::benchmark(2, 5);
        assert_eq!((c.alpha(), c.k_lo()), (0.3, 3));
        let c = BenchCase::benchmark(2, 3);
        assert_eq!((c.alpha(), c.k_lo()), (0.1, 1));
        assert_eq!(c.geometry().gauss_order, 8);
        assert_eq!((c.mu_a, c.mu_b, c.tol), (1.0, 1000.0, 1e-10));
    }

    #[test]
    fn config_parsing() {
        let mut c = BenchCase::default();
        c.apply_config("# comment\ncells = 8\ndegree=3\nsolver=gmres-pmg\nlevelset=sphere:0,0,0,0.5\n\nklo=2 # inline")
            .unwrap();
        assert_eq!(
            (c.cells, c.degree, c.solver, c.k_lo()),
            (8, 3, SolverKind::GmresPmg, 2)
        );
        assert!(c.apply_config("bogus=1").is_err());
        assert!(c.apply_config("cells").is_err());
        assert!(c.set("cells", "x").is_err());
        c.set("klo", "4").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn manufactured_solutions_have_consistent_flux() {
        for m in [
            Manufactured::Sphere { radius: 0.7 },
            Manufactured::PlaneSine { offset: 0.1 },
        ] {
            let p = m.level_set().into_shared();
            // points on the interface: equal values and equal fluxes from both sides
            let x = match m {
                Manufactured::Sphere { .. } => [0.7 * 0.6, 0.7 * 0.8, 0.0],
                Manufactured::PlaneSine { .. } => [0.1, 0.3, -0.2],
            };
            assert!(p.value(&x).abs() < 1e-12);
            let (ua, ub) = (m.value(&x, 1.0, 3), m.value(&x, 1000.0, 3));
            assert!((ua - ub).abs() < 1e-12);
            let h = 1e-6;
            let flux = |mu: f64| {
                let g = crate::levelset::gradient_or_fd(p.as_ref(), &x, 3, 1e-6);
                let gn = norm(&g);
                let mut xp = x;
                let mut xm = x;
                for d in 0..3 {
                    xp[d] += h * g[d] / gn;
                    xm[d] -= h * g[d] / gn;
                }
                mu * (m.value(&xp, mu, 3) - m.value(&xm, mu, 3)) / (2.0 * h)
            };
            assert!((flux(1.0) - flux(1000.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn sweep_rejects_empty_lists_and_records_failures() {
        let base = BenchCase {
            dim: 2,
            ..BenchCase::default()
        };
        assert!(run_sweep(&base, &[], &[2], &[SolverKind::Direct]).is_err());
        let bad = BenchCase {
            levelset: NamedLevelSet::Constant(0.0),
            ..base
        };
        let rows = run_sweep(&bad, &[2], &[1], &[SolverKind::Direct]).unwrap();
        assert_eq!(rows.len(), 1);
        let rec = rows[0].record();
        assert_eq!(rec.len(), SWEEP_HEADER.len());
        assert!(!rec[12].is_empty());
    }
}
