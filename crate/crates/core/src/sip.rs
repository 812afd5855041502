//! Symmetric interior penalty discretization of `-div(μ grad u) = f` with a
//! species-wise constant `μ`.
//!
//! Assembly works on the raw cut-cell basis: the orthonormal basis of each
//! background cell restricted to one species. [`assemble_sip`] and
//! [`assemble_rhs`] apply the re-orthonormalization `S` on top of it.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::basis::ReferenceBasis;
use crate::cutcell::{CutCellMesh, PieceKind, SkeletonPiece};
use crate::error::{Error, Result};
use crate::linalg::BlockSparseMatrix;
use crate::multigrid::CutAggregate;
use crate::xdg::{SpeciesOrthoBlocks, XdgIndexMap};
use crate::Species;

/// Field evaluated per species, e.g. a source term or boundary data.
pub type ScalarField = Arc<dyn Fn(&[f64; 3], Species) -> f64 + Send + Sync>;

pub fn constant_field(c: f64) -> ScalarField {
    Arc::new(move |_, _| c)
}

#[derive(Clone)]
pub enum BoundaryCondition {
    Dirichlet(ScalarField),
    Neumann(ScalarField),
}

impl fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryCondition::Dirichlet(_) => write!(f, "Dirichlet"),
            BoundaryCondition::Neumann(_) => write!(f, "Neumann"),
        }
    }
}

/// Coefficients, source and boundary data. Boundary conditions are indexed by
/// the domain face id `2 * axis + side`.
#[derive(Clone)]
pub struct PoissonProblem {
    mu: [f64; 2],
    pub source: ScalarField,
    pub boundary: Vec<BoundaryCondition>,
}

impl fmt::Debug for PoissonProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PoissonProblem")
            .field("mu", &self.mu)
            .field("boundary", &self.boundary)
            .finish()
    }
}

impl PoissonProblem {
    /// `f = 0` and homogeneous Dirichlet data on every domain face.
    pub fn new(dim: usize, mu_a: f64, mu_b: f64) -> Result<Self> {
        if !(mu_a > 0.0 && mu_b > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "diffusion coefficients must be positive, got {mu_a}, {mu_b}"
            )));
        }
        Ok(PoissonProblem {
            mu: [mu_a, mu_b],
            source: constant_field(0.0),
            boundary: vec![BoundaryCondition::Dirichlet(constant_field(0.0)); 2 * dim],
        })
    }

    /// `f = 1`, `g = 0` on all faces of a 3D box.
    pub fn benchmark(mu_a: f64, mu_b: f64) -> Result<Self> {
        Ok(Self::new(3, mu_a, mu_b)?.with_source(constant_field(1.0)))
    }

    pub fn with_source(mut self, f: ScalarField) -> Self {
        self.source = f;
        self
    }

    /// Dirichlet data `g` on every domain face.
    pub fn with_dirichlet(mut self, g: ScalarField) -> Self {
        for bc in &mut self.boundary {
            *bc = BoundaryCondition::Dirichlet(g.clone());
        }
        self
    }

    pub fn with_boundary(mut self, id: usize, bc: BoundaryCondition) -> Self {
        self.boundary[id] = bc;
        self
    }

    pub fn mu(&self, s: Species) -> f64 {
        self.mu[s.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    /// Multiplicative constant `c_η`.
    pub c_eta: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig { c_eta: 4.0 }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_eta > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "c_eta must be positive, got {}",
                self.c_eta
            )))
        }
    }
}

/// Inverse length scales `1/h'` per cut cell, with `h' = D |K| / |∂K|` taken
/// on the agglomerated cut cell containing it (boundary includes the interface).
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyScales {
    inv_h: Vec<[f64; 2]>,
}

impl PenaltyScales {
    pub fn new(cutmesh: &CutCellMesh, aggregates: &[CutAggregate]) -> Result<Self> {
        let n = cutmesh.num_cells();
        let mut owner = vec![[usize::MAX; 2]; n];
        for (a, agg) in aggregates.iter().enumerate() {
            for &j in &agg.cells {
                owner[j][agg.species.index()] = a;
            }
        }
        let mut surface = vec![0.0; aggregates.len()];
        for piece in cutmesh.skeleton() {
            let m = piece.rule.measure();
            let a_in = owner[piece.inner.0][piece.inner.1.index()];
            let a_out = piece.outer.map(|(l, s)| owner[l][s.index()]);
            if a_out == Some(a_in) {
                continue;
            }
            if a_in != usize::MAX {
                surface[a_in] += m;
            }
            if let Some(a) = a_out.filter(|&a| a != usize::MAX) {
                surface[a] += m;
            }
        }
        let dim = cutmesh.dim() as f64;
        let mut inv_h = vec![[f64::NAN; 2]; n];
        for (a, agg) in aggregates.iter().enumerate() {
            let vol = agg.species_volume(cutmesh);
            if vol <= 0.0 {
                return Err(Error::MissingSpecies {
                    cell: agg.representative(),
                    species: agg.species,
                });
            }
            for &j in &agg.cells {
                inv_h[j][agg.species.index()] = surface[a] / (dim * vol);
            }
        }
        Ok(PenaltyScales { inv_h })
    }

    /// `1/h'` of the agglomerated cut cell containing `(j, s)`.
    pub fn inverse_length(&self, j: usize, s: Species) -> Result<f64> {
        let v = self.inv_h[j][s.index()];
        if v.is_nan() {
            Err(Error::MissingSpecies {
                cell: j,
                species: s,
            })
        } else {
            Ok(v)
        }
    }
}

/// `η = c_η k² max(1/h')` over the cut cells adjacent to `piece`. Degree 0 is
/// treated as degree 1 so the penalty never vanishes.
pub fn penalty_eta(
    piece: &SkeletonPiece,
    k: usize,
    scales: &PenaltyScales,
    config: &PenaltyConfig,
) -> Result<f64> {
    let mut inv = scales.inverse_length(piece.inner.0, piece.inner.1)?;
    if let Some((l, s)) = piece.outer {
        inv = inv.max(scales.inverse_length(l, s)?);
    }
    let k = k.max(1) as f64;
    Ok(config.c_eta * k * k * inv)
}

fn check_layout(cutmesh: &CutCellMesh, map: &XdgIndexMap) -> Result<()> {
    if map.degrees().len() != 1 {
        return Err(Error::InvalidInput(
            "the Poisson operator takes a single scalar variable".into(),
        ));
    }
    let expected: usize = (0..cutmesh.num_cells())
        .map(|j| cutmesh.cell(j).species().count())
        .sum();
    let consistent = map.num_blocks() == expected
        && (0..cutmesh.num_cells()).all(|j| {
            cutmesh
                .cell(j)
                .species()
                .all(|s| map.block_of(j, s).is_some())
        });
    if !consistent {
        return Err(Error::DimensionMismatch {
            expected: expected * map.block_size(),
            got: map.len(),
        });
    }
    Ok(())
}

/// Per-point basis data on one side of a piece.
struct Side {
    block: usize,
    cell: crate::mesh::Aabb,
    species: Species,
    sign: f64,
}

struct Workspace {
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<[f64; 3]>>,
    dn: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            values: vec![vec![0.0; n]; 2],
            grads: vec![vec![[0.0; 3]; n]; 2],
            dn: vec![vec![0.0; n]; 2],
        }
    }
}

fn sides_of(piece: &SkeletonPiece, cutmesh: &CutCellMesh, map: &XdgIndexMap) -> Vec<Side> {
    let mesh = cutmesh.background();
    let mut sides = vec![Side {
        block: map
            .block_of(piece.inner.0, piece.inner.1)
            .expect("layout checked"),
        cell: mesh.cell_box(piece.inner.0),
        species: piece.inner.1,
        sign: 1.0,
    }];
    if let Some((l, s)) = piece.outer {
        sides.push(Side {
            block: map.block_of(l, s).expect("layout checked"),
            cell: mesh.cell_box(l),
            species: s,
            sign: -1.0,
        });
    }
    sides
}

fn is_neumann(
    piece: &SkeletonPiece,
    cutmesh: &CutCellMesh,
    problem: &PoissonProblem,
) -> Option<bool> {
    match piece.kind {
        PieceKind::Face { face } => cutmesh.faces()[face]
            .boundary_id()
            .map(|id| matches!(problem.boundary[id], BoundaryCondition::Neumann(_))),
        PieceKind::Interface => None,
    }
}

fn piece_normal(piece: &SkeletonPiece, cutmesh: &CutCellMesh, q: usize) -> [f64; 3] {
    match piece.kind {
        PieceKind::Face { face } => cutmesh.faces()[face].normal(),
        PieceKind::Interface => piece.rule.normals.as_ref().expect("interface normals")[q],
    }
}

/// SIP matrix on the raw cut-cell basis.
pub fn assemble_sip_raw(
    cutmesh: &CutCellMesh,
    map: &XdgIndexMap,
    problem: &PoissonProblem,
    penalty: &PenaltyConfig,
    scales: &PenaltyScales,
) -> Result<BlockSparseMatrix> {
    check_layout(cutmesh, map)?;
    penalty.validate()?;
    let k = map.degrees()[0];
    let basis = ReferenceBasis::new(k, map.dim());
    let n = basis.len();
    let offsets = map.offsets();
    let mut matrix = BlockSparseMatrix::new(offsets.clone(), offsets);
    let mut ws = Workspace::new(n);
    let mesh = cutmesh.background();

    for (b, key) in map.blocks().iter().enumerate() {
        let rule = cutmesh.quad_volume(key.cell, key.species)?;
        let cell = mesh.cell_box(key.cell);
        let mu = problem.mu(key.species);
        let mut blk = DMatrix::zeros(n, n);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            basis.eval(&cell, x, &mut ws.values[0], &mut ws.grads[0]);
            let g = &ws.grads[0];
            for q in 0..n {
                for p in q..n {
                    let v = w * mu * (g[p][0] * g[q][0] + g[p][1] * g[q][1] + g[p][2] * g[q][2]);
                    blk[(p, q)] += v;
                }
            }
        }
        for q in 0..n {
            for p in 0..q {
                blk[(p, q)] = blk[(q, p)];
            }
        }
        matrix.add_block(b, b, &blk);
    }

    for piece in cutmesh.skeleton() {
        let boundary = is_neumann(piece, cutmesh, problem);
        if boundary == Some(true) {
            continue;
        }
        let sides = sides_of(piece, cutmesh, map);
        let eta = penalty_eta(piece, k, scales, penalty)?;
        let mus: Vec<f64> = sides.iter().map(|s| problem.mu(s.species)).collect();
        let gamma = eta * mus.iter().copied().fold(0.0, f64::max);
        // interior faces and the interface average the two sides; the boundary takes the inner trace
        let avg = if sides.len() == 2 { 0.5 } else { 1.0 };
        let ns = sides.len();
        let mut blocks = vec![DMatrix::<f64>::zeros(n, n); ns * ns];
        for (qi, (x, w)) in piece.rule.nodes.iter().zip(&piece.rule.weights).enumerate() {
            let nrm = piece_normal(piece, cutmesh, qi);
            for (si, side) in sides.iter().enumerate() {
                basis.eval(&side.cell, x, &mut ws.values[si], &mut ws.grads[si]);
                for p in 0..n {
                    let g = ws.grads[si][p];
                    ws.dn[si][p] = g[0] * nrm[0] + g[1] * nrm[1] + g[2] * nrm[2];
                }
            }
            for s in 0..ns {
                for t in 0..ns {
                    let (ss, st) = (sides[s].sign, sides[t].sign);
                    let c_t = -avg * mus[t] * ss * w;
                    let c_s = -avg * mus[s] * st * w;
                    let c_p = gamma * ss * st * w;
                    let (vs, vt, ds, dt) = (&ws.values[s], &ws.values[t], &ws.dn[s], &ws.dn[t]);
                    let blk = &mut blocks[s * ns + t];
                    for q in 0..n {
                        for p in 0..n {
                            blk[(p, q)] +=
                                c_t * dt[q] * vs[p] + c_s * ds[p] * vt[q] + c_p * vs[p] * vt[q];
                        }
                    }
                }
            }
        }
        for s in 0..ns {
            for t in 0..ns {
                matrix.add_block(sides[s].block, sides[t].block, &blocks[s * ns + t]);
            }
        }
    }
    Ok(matrix)
}

/// Right-hand side on the raw cut-cell basis.
pub fn assemble_rhs_raw(
    cutmesh: &CutCellMesh,
    map: &XdgIndexMap,
    problem: &PoissonProblem,
    penalty: &PenaltyConfig,
    scales: &PenaltyScales,
) -> Result<Vec<f64>> {
    check_layout(cutmesh, map)?;
    penalty.validate()?;
    let k = map.degrees()[0];
    let basis = ReferenceBasis::new(k, map.dim());
    let n = basis.len();
    let mut rhs = vec![0.0; map.len()];
    let mut ws = Workspace::new(n);
    let mesh = cutmesh.background();

    for (b, key) in map.blocks().iter().enumerate() {
        let rule = cutmesh.quad_volume(key.cell, key.species)?;
        let cell = mesh.cell_box(key.cell);
        let r = map.block_range(b);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let f = (problem.source)(x, key.species);
            if f == 0.0 {
                continue;
            }
            basis.values(&cell, x, &mut ws.values[0]);
            for p in 0..n {
                rhs[r.start + p] += w * f * ws.values[0][p];
            }
        }
    }

    for piece in cutmesh.skeleton() {
        let PieceKind::Face { face } = piece.kind else {
            continue;
        };
        let Some(id) = cutmesh.faces()[face].boundary_id() else {
            continue;
        };
        let (j, s) = piece.inner;
        let cell = mesh.cell_box(j);
        let mu = problem.mu(s);
        let nrm = cutmesh.faces()[face].normal();
        let r = map.block_range(map.block_of(j, s).expect("layout checked"));
        match &problem.boundary[id] {
            BoundaryCondition::Neumann(g) => {
                for (x, w) in piece.rule.nodes.iter().zip(&piece.rule.weights) {
                    let gv = g(x, s);
                    basis.values(&cell, x, &mut ws.values[0]);
                    for p in 0..n {
                        rhs[r.start + p] += w * mu * gv * ws.values[0][p];
                    }
                }
            }
            BoundaryCondition::Dirichlet(g) => {
                let eta = penalty_eta(piece, k, scales, penalty)?;
                for (x, w) in piece.rule.nodes.iter().zip(&piece.rule.weights) {
                    let gv = g(x, s);
                    if gv == 0.0 {
                        continue;
                    }
                    basis.eval(&cell, x, &mut ws.values[0], &mut ws.grads[0]);
                    for p in 0..n {
                        let gp = ws.grads[0][p];
                        let dn = gp[0] * nrm[0] + gp[1] * nrm[1] + gp[2] * nrm[2];
                        rhs[r.start + p] -= w * mu * gv * (dn - eta * ws.values[0][p]);
                    }
                }
            }
        }
    }
    Ok(rhs)
}

/// SIP matrix in the re-orthonormalized basis, `Sᵀ M_raw S`.
pub fn assemble_sip(
    cutmesh: &CutCellMesh,
    map: &XdgIndexMap,
    ortho: &SpeciesOrthoBlocks,
    problem: &PoissonProblem,
    penalty: &PenaltyConfig,
    scales: &PenaltyScales,
) -> Result<BlockSparseMatrix> {
    let raw = assemble_sip_raw(cutmesh, map, problem, penalty, scales)?;
    raw.galerkin(&ortho.to_matrix(map))
}

/// Right-hand side in the re-orthonormalized basis, `Sᵀ b_raw`.
pub fn assemble_rhs(
    cutmesh: &CutCellMesh,
    map: &XdgIndexMap,
    ortho: &SpeciesOrthoBlocks,
    problem: &PoissonProblem,
    penalty: &PenaltyConfig,
    scales: &PenaltyScales,
) -> Result<Vec<f64>> {
    let raw = assemble_rhs_raw(cutmesh, map, problem, penalty, scales)?;
    ortho.to_matrix(map).transpose_matvec(&raw)
}

/// L² error of a raw-basis coefficient vector against `exact`.
pub fn l2_error_raw(
    coefficients: &[f64],
    exact: &dyn Fn(&[f64; 3], Species) -> f64,
    cutmesh: &CutCellMesh,
    map: &XdgIndexMap,
) -> Result<f64> {
    if coefficients.len() != map.len() {
        return Err(Error::DimensionMismatch {
            expected: map.len(),
            got: coefficients.len(),
        });
    }
    let basis = ReferenceBasis::new(map.degrees()[0], map.dim());
    let mut v = vec![0.0; basis.len()];
    let mut total = 0.0;
    for (b, key) in map.blocks().iter().enumerate() {
        let rule = cutmesh.quad_volume(key.cell, key.species)?;
        let cell = cutmesh.background().cell_box(key.cell);
        let c = &coefficients[map.block_range(b)];
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            basis.values(&cell, x, &mut v);
            let uh: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            total += w * (uh - exact(x, key.species)).powi(2);
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// L² error of a coefficient vector in the re-orthonormalized basis.
pub fn l2_error(
    solution: &[f64],
    exact: &dyn Fn(&[f64; 3], Species) -> f64,
    cutmesh: &CutCellMesh,
    map: &XdgIndexMap,
    ortho: &SpeciesOrthoBlocks,
) -> Result<f64> {
    let raw = ortho.to_matrix(map).matvec(solution)?;
    l2_error_raw(&raw, exact, cutmesh, map)
}

/// L² projection onto the re-orthonormalized basis.
pub fn project(
    f: &dyn Fn(&[f64; 3], Species) -> f64,
    cutmesh: &CutCellMesh,
    map: &XdgIndexMap,
    ortho: &SpeciesOrthoBlocks,
) -> Result<Vec<f64>> {
    let basis = ReferenceBasis::new(map.degrees()[0], map.dim());
    let mut v = vec![0.0; basis.len()];
    let mut raw_moments = vec![0.0; map.len()];
    for (b, key) in map.blocks().iter().enumerate() {
        let rule = cutmesh.quad_volume(key.cell, key.species)?;
        let cell = cutmesh.background().cell_box(key.cell);
        let r = map.block_range(b);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            basis.values(&cell, x, &mut v);
            let fx = f(x, key.species);
            for (p, vp) in v.iter().enumerate() {
                raw_moments[r.start + p] += w * fx * vp;
            }
        }
    }
    ortho.to_matrix(map).transpose_matvec(&raw_moments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutcell::GeometryConfig;
    use crate::levelset::{Constant, Plane};
    use crate::mesh::BackgroundMesh;
    use crate::multigrid::{small_cell_agglomeration_map, CutAggregationMap};

    fn setup(
        mesh: &BackgroundMesh,
        phi: Arc<dyn crate::levelset::LevelSet>,
        k: usize,
    ) -> (CutCellMesh, XdgIndexMap, PenaltyScales) {
        let cm =
            CutCellMesh::classify_and_build(mesh, phi, GeometryConfig::new(3, 2 * k + 2)).unwrap();
        let map = XdgIndexMap::build(&cm, &[k]).unwrap();
        let aggs = CutAggregationMap::empty().aggregates(&cm).unwrap();
        let scales = PenaltyScales::new(&cm, &aggs).unwrap();
        (cm, map, scales)
    }

    #[test]
    fn penalty_on_unit_cube() {
        let mesh = BackgroundMesh::build_cartesian(3, &[0.0; 3], &[1.0; 3], &[1, 1, 1]).unwrap();
        let (cm, _, scales) = setup(&mesh, Arc::new(Constant(-1.0)), 2);
        let piece = &cm.skeleton()[0];
        let cfg = PenaltyConfig::default();
        assert!((penalty_eta(piece, 2, &scales, &cfg).unwrap() - 32.0).abs() < 1e-12);
        assert!((penalty_eta(piece, 4, &scales, &cfg).unwrap() - 128.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_on_half_cube() {
        // V = 1/2, boundary = 4 half faces + 1 full face + interface = 4
        let mesh = BackgroundMesh::build_cartesian(3, &[0.0; 3], &[1.0; 3], &[1, 1, 1]).unwrap();
        let phi = Arc::new(Plane {
            normal: [1.0, 0.0, 0.0],
            offset: 0.5,
        });
        let (_, _, scales) = setup(&mesh, phi, 2);
        let h = 1.0 / scales.inverse_length(0, Species::A).unwrap();
        assert!((h - 3.0 * 0.5 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_positive_definite() {
        let mesh = BackgroundMesh::unit_cube(2, 3).unwrap();
        let phi = Arc::new(Plane {
            normal: [0.6, 0.8, 0.0],
            offset: 0.1,
        });
        let (cm, map, scales) = setup(&mesh, phi, 2);
        let problem = PoissonProblem::new(2, 1.0, 1000.0).unwrap();
        let m = assemble_sip_raw(&cm, &map, &problem, &PenaltyConfig::default(), &scales).unwrap();
        assert!(m.asymmetry() <= 1e-12 * m.max_abs());
        let ortho = SpeciesOrthoBlocks::build(&cm, &map).unwrap();
        let mo = assemble_sip(
            &cm,
            &map,
            &ortho,
            &problem,
            &PenaltyConfig::default(),
            &scales,
        )
        .unwrap();
        let d = mo.to_dense();
        let sym = (&d + d.transpose()) * 0.5;
        assert!(sym.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn constants_in_pure_neumann_kernel() {
        let mesh = BackgroundMesh::unit_cube(2, 3).unwrap();
        let (cm, map, scales) = setup(&mesh, Arc::new(Constant(-1.0)), 2);
        let mut problem = PoissonProblem::new(2, 2.0, 2.0).unwrap();
        for id in 0..4 {
            problem = problem.with_boundary(id, BoundaryCondition::Neumann(constant_field(0.0)));
        }
        let m = assemble_sip_raw(&cm, &map, &problem, &PenaltyConfig::default(), &scales).unwrap();
        let ortho = SpeciesOrthoBlocks::build(&cm, &map).unwrap();
        let u = project(&|_, _| 1.0, &cm, &map, &ortho).unwrap();
        let mu = m.matvec(&u).unwrap();
        assert!(mu.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn source_moments_and_zero_rhs() {
        let mesh = BackgroundMesh::unit_cube(3, 2).unwrap();
        let (cm, map, scales) = setup(&mesh, Arc::new(Constant(-1.0)), 2);
        let problem = PoissonProblem::benchmark(1.0, 1000.0).unwrap();
        let b = assemble_rhs_raw(&cm, &map, &problem, &PenaltyConfig::default(), &scales).unwrap();
        for blk in 0..8 {
            assert!((b[blk * 10] - 1.0).abs() < 1e-13);
            assert!(b[blk * 10 + 1..blk * 10 + 10]
                .iter()
                .all(|v| v.abs() < 1e-13));
        }
        let zero = PoissonProblem::new(3, 1.0, 1.0).unwrap();
        let b = assemble_rhs_raw(&cm, &map, &zero, &PenaltyConfig::default(), &scales).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l2_error_of_zero_against_one() {
        let mesh = BackgroundMesh::unit_cube(3, 2).unwrap();
        let (cm, map, _) = setup(&mesh, Arc::new(Constant(-1.0)), 1);
        let ortho = SpeciesOrthoBlocks::build(&cm, &map).unwrap();
        let e = l2_error(&vec![0.0; map.len()], &|_, _| 1.0, &cm, &map, &ortho).unwrap();
        assert!((e - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn projection_of_polynomial_is_exact_with_planar_interface() {
        let mesh = BackgroundMesh::unit_cube(3, 2).unwrap();
        let phi = Arc::new(Plane {
            normal: [0.48, 0.6, 0.64],
            offset: 0.1,
        });
        let (cm, map, _) = setup(&mesh, phi, 2);
        let ortho = SpeciesOrthoBlocks::build(&cm, &map).unwrap();
        let u = |x: &[f64; 3], s: Species| match s {
            Species::A => x[0] * x[1] - x[2] * x[2] + 0.5,
            Species::B => 3.0 * x[0] + x[1] * x[1],
        };
        let c = project(&u, &cm, &map, &ortho).unwrap();
        assert!(l2_error(&c, &u, &cm, &map, &ortho).unwrap() <= 1e-10);
    }

    #[test]
    fn agglomerated_scales_cover_every_cut_cell() {
        let mesh = BackgroundMesh::unit_cube(2, 4).unwrap();
        let phi = Arc::new(Plane {
            normal: [1.0, 0.0, 0.0],
            offset: 0.47,
        });
        let cm = CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::default()).unwrap();
        let aggs = small_cell_agglomeration_map(&cm, 0.1)
            .unwrap()
            .aggregates(&cm)
            .unwrap();
        let scales = PenaltyScales::new(&cm, &aggs).unwrap();
        for j in 0..cm.num_cells() {
            for s in cm.cell(j).species() {
                assert!(scales.inverse_length(j, s).unwrap().is_finite());
            }
        }
        // the sliver of B at x in (0.47, 0.5) is merged with its right neighbour
        let sliver = aggs
            .iter()
            .find(|a| a.species == Species::B && a.cells.contains(&2))
            .unwrap();
        assert!(sliver.cells.len() > 1);
    }
}
