//! Aggregation multigrid hierarchy on the agglomerated XDG space.
//!
//! Every aggregate of every level carries the orthonormal basis
//! `φ^a = ψ^a T_a`, where `ψ^a` are the Legendre modes of the aggregate's
//! bounding box restricted to its species region and `T_a` is upper
//! triangular. Level 1 is represented on the raw cut-cell basis through `P1`;
//! level `λ+1` is represented on level `λ` through `R^λ`, whose columns are
//! orthonormal.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::basis::ReferenceBasis;
use crate::cutcell::CutCellMesh;
use crate::error::{Error, Result};
use crate::linalg::BlockSparseMatrix;
use crate::mesh::{multigrid_aggregation_sequence, Aabb};
use crate::multigrid::{lift_aggregation_to_cutcells, CutAggregate, CutAggregationMap};
use crate::xdg::{orthonormalizer, species_mass, BlockKey, XdgIndexMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyConfig {
    /// Maximum number of levels `Λ`; construction stops early once coarsening saturates.
    pub levels: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig { levels: 3 }
    }
}

/// One multigrid level.
#[derive(Debug, Clone)]
pub struct Level {
    pub aggregates: Vec<CutAggregate>,
    /// Effective cut-cell aggregation map of this level.
    pub map: CutAggregationMap,
    /// Blocks keyed by (representative, species), one per aggregate.
    pub index_map: XdgIndexMap,
    pub bounding_boxes: Vec<Aabb>,
    /// `T_a` per aggregate.
    pub ortho: Vec<DMatrix<f64>>,
    pub ortho_inv: Vec<DMatrix<f64>>,
    pub matrix: BlockSparseMatrix,
    pub rhs: Vec<f64>,
    /// `R^λ` onto the next coarser level, if any.
    pub restriction: Option<BlockSparseMatrix>,
}

impl Level {
    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    pub fn num_aggregates(&self) -> usize {
        self.aggregates.len()
    }

    /// Values of the basis of aggregate `a` at `x` (caller checks `x` lies in its species region).
    pub fn basis_values(&self, basis: &ReferenceBasis, a: usize, x: &[f64; 3]) -> Vec<f64> {
        let mut psi = vec![0.0; basis.len()];
        basis.values(&self.bounding_boxes[a], x, &mut psi);
        let t = &self.ortho[a];
        (0..basis.len())
            .map(|n| (0..=n).map(|m| psi[m] * t[(m, n)]).sum())
            .collect()
    }
}

/// Wall-clock split of hierarchy construction.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HierarchyTimings {
    /// Aggregate bases and transfer matrices.
    pub basis_ms: f64,
    /// Galerkin products.
    pub matmat_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    degree: usize,
    basis: ReferenceBasis,
    raw_map: XdgIndexMap,
    prolongation: BlockSparseMatrix,
    levels: Vec<Level>,
    timings: HierarchyTimings,
}

fn bounding_box(cutmesh: &CutCellMesh, cells: &[usize]) -> Aabb {
    let mesh = cutmesh.background();
    cells[1..].iter().fold(mesh.cell_box(cells[0]), |acc, &j| {
        acc.union(&mesh.cell_box(j))
    })
}

/// Upper-triangular `T` with `Tᵀ G T = I`, refined by a second Cholesky pass.
fn gram_orthonormalizer(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let t1 = orthonormalizer(g)?;
    let g2 = t1.transpose() * g * &t1;
    let g2 = (&g2 + g2.transpose()) * 0.5;
    let t2 = orthonormalizer(&g2)?;
    Some(t1 * t2)
}

fn upper_inverse(t: &DMatrix<f64>) -> DMatrix<f64> {
    let n = t.nrows();
    t.solve_upper_triangular(&DMatrix::identity(n, n))
        .expect("orthonormalizer has a nonzero diagonal")
}

fn degenerate(agg: &CutAggregate) -> Error {
    Error::DegenerateAggregate {
        representative: agg.representative(),
        species: agg.species,
    }
}

fn index_map_of(
    cutmesh: &CutCellMesh,
    aggregates: &[CutAggregate],
    k: usize,
) -> Result<XdgIndexMap> {
    let keys = aggregates
        .iter()
        .map(|a| BlockKey {
            cell: a.representative(),
            species: a.species,
        })
        .collect();
    XdgIndexMap::from_blocks(cutmesh.dim(), cutmesh.num_cells(), keys, &[k])
}

/// `(M^{λ+1}, b^{λ+1}) = (Rᵀ M R, Rᵀ b)`.
pub fn galerkin_restrict(
    m: &BlockSparseMatrix,
    b: &[f64],
    r: &BlockSparseMatrix,
) -> Result<(BlockSparseMatrix, Vec<f64>)> {
    if m.ncols() != r.nrows() || b.len() != m.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.ncols(),
            got: r.nrows().min(b.len()),
        });
    }
    Ok((m.galerkin(r)?, r.transpose_matvec(b)?))
}

impl Hierarchy {
    /// Builds the hierarchy from the raw-basis system.
    ///
    /// `agglomeration` is the small-cell map `A_α`; level `λ` uses
    /// `lift(A^λ) ∪ A_α` with the background maps of
    /// [`multigrid_aggregation_sequence`].
    pub fn build(
        cutmesh: &CutCellMesh,
        agglomeration: &CutAggregationMap,
        raw_map: &XdgIndexMap,
        raw_matrix: &BlockSparseMatrix,
        raw_rhs: &[f64],
        config: &HierarchyConfig,
    ) -> Result<Hierarchy> {
        if raw_map.degrees().len() != 1 {
            return Err(Error::InvalidInput(
                "hierarchy supports a single variable".into(),
            ));
        }
        if raw_matrix.nrows() != raw_map.len()
            || raw_matrix.ncols() != raw_map.len()
            || raw_rhs.len() != raw_map.len()
        {
            return Err(Error::DimensionMismatch {
                expected: raw_map.len(),
                got: raw_matrix.nrows(),
            });
        }
        let k = raw_map.degrees()[0];
        let basis = ReferenceBasis::new(k, cutmesh.dim());
        let n = basis.len();
        let mut timings = HierarchyTimings::default();

        let clock = Instant::now();
        let aggregates = agglomeration.aggregates(cutmesh)?;
        let index_map = index_map_of(cutmesh, &aggregates, k)?;
        let bounding_boxes: Vec<Aabb> = aggregates
            .iter()
            .map(|a| bounding_box(cutmesh, &a.cells))
            .collect();
        let mesh = cutmesh.background();
        let mut prolongation = BlockSparseMatrix::new(raw_map.offsets(), index_map.offsets());
        let mut ortho = Vec::with_capacity(aggregates.len());
        let mut ortho_inv = Vec::with_capacity(aggregates.len());
        for (a, agg) in aggregates.iter().enumerate() {
            let s = agg.species;
            let raw_block = |j: usize| {
                raw_map.block_of(j, s).ok_or(Error::MissingSpecies {
                    cell: j,
                    species: s,
                })
            };
            let t = if agg.cells.len() == 1 {
                let j = agg.cells[0];
                let mass = species_mass(cutmesh, &basis, j, s)?;
                let t = if cutmesh.cell(j).is_cut() {
                    gram_orthonormalizer(&mass).ok_or_else(|| degenerate(agg))?
                } else {
                    DMatrix::identity(n, n)
                };
                prolongation.add_block(raw_block(j)?, a, &t);
                t
            } else {
                let transfers: Vec<DMatrix<f64>> = agg
                    .cells
                    .iter()
                    .map(|&j| basis.transfer(&bounding_boxes[a], &mesh.cell_box(j)))
                    .collect();
                let mut g = DMatrix::zeros(n, n);
                for (&j, e) in agg.cells.iter().zip(&transfers) {
                    let mass = species_mass(cutmesh, &basis, j, s)?;
                    g += e.transpose() * mass * e;
                }
                let t = gram_orthonormalizer(&g).ok_or_else(|| degenerate(agg))?;
                for (&j, e) in agg.cells.iter().zip(&transfers) {
                    prolongation.add_block(raw_block(j)?, a, &(e * &t));
                }
                t
            };
            ortho_inv.push(upper_inverse(&t));
            ortho.push(t);
        }
        timings.basis_ms += clock.elapsed().as_secs_f64() * 1e3;

        let clock = Instant::now();
        let (matrix, rhs) = galerkin_restrict(raw_matrix, raw_rhs, &prolongation)?;
        timings.matmat_ms += clock.elapsed().as_secs_f64() * 1e3;

        let mut levels = vec![Level {
            aggregates,
            map: agglomeration.clone(),
            index_map,
            bounding_boxes,
            ortho,
            ortho_inv,
            matrix,
            rhs,
            restriction: None,
        }];

        let background = multigrid_aggregation_sequence(mesh, config.levels.max(1))?;
        for bg in background.iter().skip(1) {
            let map = lift_aggregation_to_cutcells(bg, cutmesh).union(agglomeration);
            let clock = Instant::now();
            let fine = levels.last().expect("level 1 exists");
            let aggregates = map.aggregates(cutmesh)?;
            if aggregates.len() >= fine.aggregates.len() {
                break;
            }
            let coarse = Self::coarsen(cutmesh, &basis, fine, map, aggregates)?;
            let r = coarse.0;
            let mut next = coarse.1;
            timings.basis_ms += clock.elapsed().as_secs_f64() * 1e3;

            let clock = Instant::now();
            let (m, b) = galerkin_restrict(&fine.matrix, &fine.rhs, &r)?;
            next.matrix = m;
            next.rhs = b;
            timings.matmat_ms += clock.elapsed().as_secs_f64() * 1e3;
            levels.last_mut().expect("level exists").restriction = Some(r);
            levels.push(next);
        }

        Ok(Hierarchy {
            degree: k,
            basis,
            raw_map: raw_map.clone(),
            prolongation,
            levels,
            timings,
        })
    }

    /// Restriction matrix from `fine` to the aggregates of `map`, and the
    /// coarse level without its system.
    fn coarsen(
        cutmesh: &CutCellMesh,
        basis: &ReferenceBasis,
        fine: &Level,
        map: CutAggregationMap,
        aggregates: Vec<CutAggregate>,
    ) -> Result<(BlockSparseMatrix, Level)> {
        let k = basis.degree();
        let n = basis.len();
        let index_map = index_map_of(cutmesh, &aggregates, k)?;
        // every fine aggregate lies inside exactly one coarse aggregate
        let mut owner = vec![[usize::MAX; 2]; cutmesh.num_cells()];
        for (b, agg) in aggregates.iter().enumerate() {
            for &j in &agg.cells {
                owner[j][agg.species.index()] = b;
            }
        }
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); aggregates.len()];
        for (a, agg) in fine.aggregates.iter().enumerate() {
            let b = owner[agg.representative()][agg.species.index()];
            if agg
                .cells
                .iter()
                .any(|&j| owner[j][agg.species.index()] != b)
            {
                return Err(Error::InvalidMap(
                    "coarse aggregation does not nest the fine one".into(),
                ));
            }
            children[b].push(a);
        }

        let bounding_boxes: Vec<Aabb> = aggregates
            .iter()
            .map(|a| bounding_box(cutmesh, &a.cells))
            .collect();
        let mut r = BlockSparseMatrix::new(fine.index_map.offsets(), index_map.offsets());
        let mut ortho = Vec::with_capacity(aggregates.len());
        let mut ortho_inv = Vec::with_capacity(aggregates.len());
        for (b, agg) in aggregates.iter().enumerate() {
            if let [a] = children[b][..] {
                r.add_block(a, b, &DMatrix::identity(n, n));
                ortho.push(fine.ortho[a].clone());
                ortho_inv.push(fine.ortho_inv[a].clone());
                continue;
            }
            let blocks: Vec<DMatrix<f64>> = children[b]
                .iter()
                .map(|&a| {
                    &fine.ortho_inv[a] * basis.transfer(&bounding_boxes[b], &fine.bounding_boxes[a])
                })
                .collect();
            let mut g = DMatrix::zeros(n, n);
            for blk in &blocks {
                g += blk.transpose() * blk;
            }
            let t = gram_orthonormalizer(&g).ok_or_else(|| degenerate(agg))?;
            for (&a, blk) in children[b].iter().zip(&blocks) {
                r.add_block(a, b, &(blk * &t));
            }
            ortho_inv.push(upper_inverse(&t));
            ortho.push(t);
        }
        let m = index_map.len();
        Ok((
            r,
            Level {
                aggregates,
                map,
                index_map,
                bounding_boxes,
                ortho,
                ortho_inv,
                matrix: BlockSparseMatrix::new(vec![0, m], vec![0, m]),
                rhs: Vec::new(),
                restriction: None,
            },
        ))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn basis(&self) -> &ReferenceBasis {
        &self.basis
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Level `λ`, 0-based (index 0 is the finest, agglomerated level).
    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn raw_map(&self) -> &XdgIndexMap {
        &self.raw_map
    }

    /// `P1`: finest level to raw cut-cell coefficients.
    pub fn prolongation(&self) -> &BlockSparseMatrix {
        &self.prolongation
    }

    pub fn timings(&self) -> HierarchyTimings {
        self.timings
    }

    /// Raw cut-cell coefficients of a level-`l` coefficient vector.
    pub fn to_raw(&self, l: usize, u: &[f64]) -> Result<Vec<f64>> {
        let mut v = u.to_vec();
        for level in self.levels[..l].iter().rev() {
            v = level
                .restriction
                .as_ref()
                .expect("inner levels have R")
                .matvec(&v)?;
        }
        self.prolongation.matvec(&v)
    }

    /// One CSV row per level: `level,aggregates,dofs,nonzero_blocks`.
    pub fn write_summary<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "aggregates", "dofs", "nonzero_blocks"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for (l, level) in self.levels.iter().enumerate() {
            w.write_record([
                (l + 1).to_string(),
                level.num_aggregates().to_string(),
                level.len().to_string(),
                level.matrix.num_stored_blocks().to_string(),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
