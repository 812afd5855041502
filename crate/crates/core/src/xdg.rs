//! XDG index map and per-species re-orthonormalization of the cut-cell basis.
//!
//! On a cut cell the basis of each present species is the background-cell
//! basis multiplied by the characteristic function of the species region.
//! Those functions are no longer orthonormal; `S = L^{-T}` from the Cholesky
//! factor of the species mass matrix restores orthonormality.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::basis::{num_modes, ReferenceBasis};
use crate::cutcell::CutCellMesh;
use crate::error::{Error, Result};
use crate::linalg::BlockSparseMatrix;
use crate::Species;

/// A block of unknowns: one (cell, species) pair. On agglomerated levels
/// `cell` is the aggregate representative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockKey {
    pub cell: usize,
    pub species: Species,
}

/// Bijection `m(j, γ, 𝔖, n)` between basis tuples and flat indices. Blocks are
/// ordered by cell, then species (A before B); inside a block variables come
/// first and modes second.
#[derive(Debug, Clone, PartialEq)]
pub struct XdgIndexMap {
    dim: usize,
    degrees: Vec<usize>,
    var_offsets: Vec<usize>,
    block_size: usize,
    blocks: Vec<BlockKey>,
    lookup: Vec<[Option<usize>; 2]>,
}

impl XdgIndexMap {
    /// Index map of the cut-cell mesh for the degree vector `degrees` (one entry per variable).
    pub fn build(cutmesh: &CutCellMesh, degrees: &[usize]) -> Result<Self> {
        let blocks = (0..cutmesh.num_cells())
            .flat_map(|j| {
                cutmesh
                    .cell(j)
                    .species()
                    .map(move |species| BlockKey { cell: j, species })
            })
            .collect::<Vec<_>>();
        Self::from_blocks(cutmesh.dim(), cutmesh.num_cells(), blocks, degrees)
    }

    /// Index map over an explicit block list; `num_cells` bounds the cell ids.
    pub fn from_blocks(
        dim: usize,
        num_cells: usize,
        mut blocks: Vec<BlockKey>,
        degrees: &[usize],
    ) -> Result<Self> {
        if blocks.is_empty() || degrees.is_empty() {
            return Err(Error::InvalidInput(
                "index map needs at least one block and one variable".into(),
            ));
        }
        blocks.sort();
        blocks.dedup();
        let mut lookup = vec![[None, None]; num_cells];
        for (b, key) in blocks.iter().enumerate() {
            if key.cell >= num_cells {
                return Err(Error::InvalidInput(format!(
                    "cell {} out of range",
                    key.cell
                )));
            }
            lookup[key.cell][key.species.index()] = Some(b);
        }
        let mut var_offsets = vec![0];
        for &k in degrees {
            var_offsets.push(var_offsets.last().unwrap() + num_modes(k, dim));
        }
        Ok(XdgIndexMap {
            dim,
            degrees: degrees.to_vec(),
            block_size: *var_offsets.last().unwrap(),
            var_offsets,
            blocks,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Total dimension `L`.
    pub fn len(&self) -> usize {
        self.blocks.len() * self.block_size
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn blocks(&self) -> &[BlockKey] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> BlockKey {
        self.blocks[b]
    }

    pub fn block_of(&self, cell: usize, species: Species) -> Option<usize> {
        self.lookup.get(cell).and_then(|l| l[species.index()])
    }

    pub fn block_range(&self, b: usize) -> Range<usize> {
        b * self.block_size..(b + 1) * self.block_size
    }

    /// Offsets of the blocks, `num_blocks + 1` entries.
    pub fn offsets(&self) -> Vec<usize> {
        (0..=self.blocks.len())
            .map(|b| b * self.block_size)
            .collect()
    }

    /// Flat index `m(cell, var, species, mode)`.
    pub fn index(&self, cell: usize, var: usize, species: Species, mode: usize) -> Option<usize> {
        let b = self.block_of(cell, species)?;
        let nv = self.var_offsets[var + 1] - self.var_offsets[var];
        (mode < nv).then(|| b * self.block_size + self.var_offsets[var] + mode)
    }

    /// Inverse of [`index`](Self::index): `(cell, var, species, mode)`.
    pub fn tuple(&self, flat: usize) -> (usize, usize, Species, usize) {
        let key = self.blocks[flat / self.block_size];
        let local = flat % self.block_size;
        let var = self.var_offsets.partition_point(|&o| o <= local) - 1;
        (key.cell, var, key.species, local - self.var_offsets[var])
    }

    /// Local indices (inside one block) of the modes of degree `<= k_lo[γ]` per variable.
    pub fn local_low_order(&self, k_lo: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        for (v, &k) in self.degrees.iter().enumerate() {
            let n = num_modes(k_lo[v].min(k), self.dim);
            out.extend(self.var_offsets[v]..self.var_offsets[v] + n);
        }
        out
    }

    /// Local indices of the modes of degree `> k_lo[γ]`.
    pub fn local_high_order(&self, k_lo: &[usize]) -> Vec<usize> {
        let low = self.local_low_order(k_lo);
        (0..self.block_size).filter(|i| !low.contains(i)).collect()
    }

    /// `m(blocks, −, −, <= N_{k_lo})`: flat low-order indices of the listed blocks.
    pub fn low_order_indices(
        &self,
        blocks: impl IntoIterator<Item = usize>,
        k_lo: &[usize],
    ) -> Vec<usize> {
        let local = self.local_low_order(k_lo);
        blocks
            .into_iter()
            .flat_map(|b| local.iter().map(move |i| b * self.block_size + i))
            .collect()
    }

    /// `m(cell, −, −, > N_{k_lo})` for every block of a background cell (both species).
    pub fn high_order_indices_of_cell(&self, cell: usize, k_lo: &[usize]) -> Vec<usize> {
        let local = self.local_high_order(k_lo);
        Species::ALL
            .into_iter()
            .filter_map(|s| self.block_of(cell, s))
            .flat_map(|b| local.iter().map(move |i| b * self.block_size + i))
            .collect()
    }

    pub fn var_range(&self, var: usize) -> Range<usize> {
        self.var_offsets[var]..self.var_offsets[var + 1]
    }
}

/// Mass matrix of the background-cell basis restricted to species `s` of cell `j`.
pub fn species_mass(
    cutmesh: &CutCellMesh,
    basis: &ReferenceBasis,
    j: usize,
    s: Species,
) -> Result<DMatrix<f64>> {
    let rule = cutmesh.quad_volume(j, s)?;
    let cell = cutmesh.background().cell_box(j);
    let n = basis.len();
    if !cutmesh.cell(j).is_cut() {
        return Ok(DMatrix::identity(n, n));
    }
    let mut mass = DMatrix::zeros(n, n);
    let mut v = vec![0.0; n];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        basis.values(&cell, x, &mut v);
        for b in 0..n {
            let wb = w * v[b];
            for a in 0..n {
                mass[(a, b)] += wb * v[a];
            }
        }
    }
    Ok(mass)
}

/// Inverse-transposed Cholesky factor `S = L^{-T}` of a symmetric positive
/// definite matrix, or `None` if a pivot falls below `1e-13` of the largest diagonal.
pub fn orthonormalizer(mass: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = mass.nrows();
    let max_diag = (0..n).map(|i| mass[(i, i)]).fold(0.0, f64::max);
    let chol = mass.clone().cholesky()?;
    let l = chol.l();
    if (0..n).any(|i| l[(i, i)] * l[(i, i)] < 1e-13 * max_diag) {
        return None;
    }
    let linv = l.solve_lower_triangular(&DMatrix::identity(n, n))?;
    Some(linv.transpose())
}

/// Re-orthonormalization factors per (block, variable); `None` stands for the identity.
#[derive(Debug, Clone)]
pub struct SpeciesOrthoBlocks {
    factors: Vec<Vec<Option<DMatrix<f64>>>>,
}

impl SpeciesOrthoBlocks {
    /// Builds `S` for every cut (cell, species) block of `map`.
    pub fn build(cutmesh: &CutCellMesh, map: &XdgIndexMap) -> Result<Self> {
        let bases: Vec<ReferenceBasis> = map
            .degrees()
            .iter()
            .map(|&k| ReferenceBasis::new(k, map.dim()))
            .collect();
        let mut factors = Vec::with_capacity(map.num_blocks());
        for key in map.blocks() {
            let mut per_var = Vec::with_capacity(bases.len());
            for basis in &bases {
                if !cutmesh.cell(key.cell).is_cut() {
                    per_var.push(None);
                    continue;
                }
                let mass = species_mass(cutmesh, basis, key.cell, key.species)?;
                let s = orthonormalizer(&mass).ok_or(Error::InsufficientAgglomeration {
                    cell: key.cell,
                    species: key.species,
                    fraction: cutmesh.volume_fraction(key.cell, key.species),
                })?;
                per_var.push(Some(s));
            }
            factors.push(per_var);
        }
        Ok(SpeciesOrthoBlocks { factors })
    }

    /// Factor of block `b`, variable `var`; `None` means identity.
    pub fn factor(&self, b: usize, var: usize) -> Option<&DMatrix<f64>> {
        self.factors[b][var].as_ref()
    }

    /// Block-diagonal matrix `S` on the layout of `map`.
    pub fn to_matrix(&self, map: &XdgIndexMap) -> BlockSparseMatrix {
        let offsets = map.offsets();
        let mut m = BlockSparseMatrix::new(offsets.clone(), offsets);
        let n = map.block_size();
        for b in 0..map.num_blocks() {
            let mut block = DMatrix::identity(n, n);
            for v in 0..map.degrees().len() {
                if let Some(s) = self.factor(b, v) {
                    let r = map.var_range(v);
                    block
                        .view_mut((r.start, r.start), (r.len(), r.len()))
                        .copy_from(s);
                }
            }
            m.add_block(b, b, &block);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutcell::GeometryConfig;
    use crate::levelset::{BenchmarkSurface, Plane, Sphere};
    use crate::mesh::BackgroundMesh;
    use std::sync::Arc;

    fn benchmark(n: usize, k: usize) -> (CutCellMesh, XdgIndexMap) {
        let mesh = BackgroundMesh::unit_cube(3, n).unwrap();
        let cm = CutCellMesh::classify_and_build(
            &mesh,
            Arc::new(BenchmarkSurface),
            GeometryConfig::new(2, 2 * k + 2),
        )
        .unwrap();
        let map = XdgIndexMap::build(&cm, &[k]).unwrap();
        (cm, map)
    }

    #[test]
    fn benchmark_dof_counts_on_coarsest_grid() {
        assert_eq!(benchmark(2, 2).1.len(), 160);
        assert_eq!(benchmark(2, 3).1.len(), 320);
        assert_eq!(benchmark(2, 5).1.len(), 896);
    }

    #[test]
    fn bijection() {
        let (_, map) = benchmark(2, 2);
        let mut seen = vec![false; map.len()];
        for key in map.blocks() {
            for n in 0..10 {
                let i = map.index(key.cell, 0, key.species, n).unwrap();
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(map.tuple(i), (key.cell, 0, key.species, n));
            }
            assert!(map.index(key.cell, 0, key.species, 10).is_none());
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn single_pure_cell_and_degree_vector() {
        let mesh = BackgroundMesh::build_cartesian(3, &[0.0; 3], &[1.0; 3], &[1, 1, 1]).unwrap();
        let cm = CutCellMesh::classify_and_build(
            &mesh,
            Arc::new(crate::levelset::Constant(-1.0)),
            GeometryConfig::default(),
        )
        .unwrap();
        assert_eq!(XdgIndexMap::build(&cm, &[2]).unwrap().len(), 10);
        let map = XdgIndexMap::build(&cm, &[2, 1]).unwrap();
        assert_eq!(map.len(), 14);
        assert_eq!(map.tuple(12), (0, 1, Species::A, 2));
        assert_eq!(map.local_low_order(&[1, 0]), vec![0, 1, 2, 3, 10]);
        assert!(XdgIndexMap::from_blocks(3, 1, vec![], &[2]).is_err());
    }

    #[test]
    fn adding_a_species_adds_one_block() {
        let (cm, map) = benchmark(2, 2);
        let mut blocks = map.blocks().to_vec();
        let pure = (0..8).find(|&j| !cm.cell(j).is_cut());
        if let Some(j) = pure {
            let missing = Species::ALL
                .into_iter()
                .find(|&s| !cm.cell(j).has(s))
                .unwrap();
            blocks.push(BlockKey {
                cell: j,
                species: missing,
            });
        } else {
            blocks.pop();
        }
        let other = XdgIndexMap::from_blocks(3, 8, blocks, &[2]).unwrap();
        assert_eq!(other.len().abs_diff(map.len()), 10);
    }

    #[test]
    fn half_cell_rescales_constant_mode() {
        let mesh = BackgroundMesh::build_cartesian(3, &[0.0; 3], &[1.0; 3], &[1, 1, 1]).unwrap();
        let phi = Arc::new(Plane {
            normal: [1.0, 0.0, 0.0],
            offset: 0.5,
        });
        let cm = CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::default()).unwrap();
        let map = XdgIndexMap::build(&cm, &[2]).unwrap();
        let s = SpeciesOrthoBlocks::build(&cm, &map).unwrap();
        let f = s.factor(0, 0).unwrap();
        assert!((f[(0, 0)] - 2f64.sqrt()).abs() < 1e-12);
    }

    fn check_disk_blocks(n: usize, min_fraction: f64) {
        let mesh = BackgroundMesh::unit_cube(2, n).unwrap();
        let phi = Arc::new(Sphere {
            center: [0.0; 3],
            radius: 0.7,
        });
        let cm = CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::new(5, 6)).unwrap();
        let map = XdgIndexMap::build(&cm, &[2]).unwrap();
        let blocks = SpeciesOrthoBlocks::build(&cm, &map).unwrap();
        let basis = ReferenceBasis::new(2, 2);
        for (b, key) in map.blocks().iter().enumerate() {
            if cm.volume_fraction(key.cell, key.species) <= min_fraction {
                continue;
            }
            match blocks.factor(b, 0) {
                None => assert!(!cm.cell(key.cell).is_cut()),
                Some(s) => {
                    let m = species_mass(&cm, &basis, key.cell, key.species).unwrap();
                    let e = s.transpose() * m * s - DMatrix::identity(6, 6);
                    assert!(e.amax() <= 1e-10, "{key:?}: {}", e.amax());
                }
            }
        }
    }

    #[test]
    fn disk_blocks_orthonormalize() {
        check_disk_blocks(2, 0.0);
        // cells at or below the agglomeration threshold are merged before use
        check_disk_blocks(4, 0.1);
    }

    #[test]
    fn tiny_fraction_fails_cholesky() {
        let mesh = BackgroundMesh::build_cartesian(2, &[0.0; 2], &[1.0; 2], &[1, 1]).unwrap();
        let phi = Arc::new(Plane {
            normal: [1.0, 0.0, 0.0],
            offset: 1e-7,
        });
        let cm = CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::default()).unwrap();
        let map = XdgIndexMap::build(&cm, &[3]).unwrap();
        let r = SpeciesOrthoBlocks::build(&cm, &map);
        assert!(matches!(
            r,
            Err(Error::InsufficientAgglomeration {
                species: Species::A,
                ..
            })
        ));
    }
}
