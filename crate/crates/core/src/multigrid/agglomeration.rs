use petgraph::unionfind::UnionFind;

use crate::cutcell::CutCellMesh;
use crate::error::{Error, Result};
use crate::mesh::AggregationMap;
use crate::Species;

/// A cut cell `K_{j,𝔖}`.
pub type CutCellId = (usize, Species);

/// Edges between same-species cut cells of face-adjacent background cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutAggregationMap {
    edges: Vec<(CutCellId, CutCellId)>,
}

/// Connected component of a [`CutAggregationMap`]: background cells (sorted) of one species.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutAggregate {
    pub species: Species,
    pub cells: Vec<usize>,
}

impl CutAggregate {
    pub fn representative(&self) -> usize {
        self.cells[0]
    }

    /// `Σ |K_{j,𝔖}| / Σ |K_j|` over the aggregate.
    pub fn volume_fraction(&self, cutmesh: &CutCellMesh) -> f64 {
        let vs: f64 = self
            .cells
            .iter()
            .map(|&j| cutmesh.volume(j, self.species))
            .sum();
        let v: f64 = self
            .cells
            .iter()
            .map(|&j| cutmesh.background().cell_volume(j))
            .sum();
        vs / v
    }

    pub fn species_volume(&self, cutmesh: &CutCellMesh) -> f64 {
        self.cells
            .iter()
            .map(|&j| cutmesh.volume(j, self.species))
            .sum()
    }
}

fn node(id: CutCellId) -> usize {
    2 * id.0 + id.1.index()
}

impl CutAggregationMap {
    /// Rejects edges that join different species.
    pub fn new(edges: impl IntoIterator<Item = (CutCellId, CutCellId)>) -> Result<Self> {
        let mut out = Vec::new();
        for (a, b) in edges {
            if a.1 != b.1 {
                return Err(Error::InvalidMap(format!(
                    "edge {a:?}-{b:?} joins different species"
                )));
            }
            if a.0 != b.0 {
                out.push(if a.0 < b.0 { (a, b) } else { (b, a) });
            }
        }
        out.sort();
        out.dedup();
        Ok(CutAggregationMap { edges: out })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn edges(&self) -> &[(CutCellId, CutCellId)] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn union(&self, other: &CutAggregationMap) -> CutAggregationMap {
        let mut edges = self.edges.clone();
        edges.extend_from_slice(&other.edges);
        edges.sort();
        edges.dedup();
        CutAggregationMap { edges }
    }

    pub fn is_subset_of(&self, other: &CutAggregationMap) -> bool {
        self.edges
            .iter()
            .all(|e| other.edges.binary_search(e).is_ok())
    }

    /// Aggregates over all cut cells of `cutmesh`, ordered by (representative, species).
    /// Cut cells not touched by the map are singletons.
    pub fn aggregates(&self, cutmesh: &CutCellMesh) -> Result<Vec<CutAggregate>> {
        let n = cutmesh.num_cells();
        let graph = cutmesh.background().graph();
        let mut uf = UnionFind::<usize>::new(2 * n);
        for &(a, b) in &self.edges {
            if a.0 >= n || b.0 >= n || !graph.contains_edge(a.0, b.0) {
                return Err(Error::InvalidMap(format!(
                    "cells {} and {} are not adjacent",
                    a.0, b.0
                )));
            }
            if !cutmesh.cell(a.0).has(a.1) || !cutmesh.cell(b.0).has(b.1) {
                return Err(Error::InvalidMap(format!(
                    "edge {a:?}-{b:?} touches an absent species"
                )));
            }
            uf.union(node(a), node(b));
        }
        let labels = uf.into_labeling();
        let mut slot: Vec<Option<usize>> = vec![None; 2 * n];
        let mut out: Vec<CutAggregate> = Vec::new();
        for j in 0..n {
            for s in cutmesh.cell(j).species() {
                let root = labels[node((j, s))];
                match slot[root] {
                    Some(k) => out[k].cells.push(j),
                    None => {
                        slot[root] = Some(out.len());
                        out.push(CutAggregate {
                            species: s,
                            cells: vec![j],
                        });
                    }
                }
            }
        }
        out.sort_by_key(|a| (a.representative(), a.species));
        Ok(out)
    }
}

/// Same-species face neighbours of cut cell `(j, s)` sharing a face portion of
/// that species, as `(volume, cell)`.
fn same_species_neighbors(cutmesh: &CutCellMesh, j: usize, s: Species) -> Vec<(f64, usize)> {
    let mesh = cutmesh.background();
    let mut out = Vec::new();
    for axis in 0..mesh.dim() {
        for side in 0..2 {
            if let Some(l) = mesh.neighbor(j, axis, side) {
                if cutmesh.cell(l).has(s) && cutmesh.cell(j).face_measure(2 * axis + side, s) > 0.0
                {
                    out.push((cutmesh.volume(l, s), l));
                }
            }
        }
    }
    out
}

/// Largest by volume, ties broken by the smaller cell index.
fn largest(candidates: &[(f64, usize)]) -> Option<usize> {
    candidates
        .iter()
        .copied()
        .reduce(|a, b| {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        })
        .map(|(_, l)| l)
}

/// Small-cell agglomeration: every cut cell with `0 < fraction <= alpha` is
/// connected to its largest same-species neighbour. Aggregates that still have
/// a fraction `<= alpha` (possible when small cells chain into each other) are
/// grown by their largest outside neighbour until none is left.
pub fn small_cell_agglomeration_map(
    cutmesh: &CutCellMesh,
    alpha: f64,
) -> Result<CutAggregationMap> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!(
            "agglomeration threshold {alpha} not in [0, 1)"
        )));
    }
    let mut edges = Vec::new();
    for j in 0..cutmesh.num_cells() {
        if !cutmesh.cell(j).is_cut() {
            continue;
        }
        for s in Species::ALL {
            let frac = cutmesh.volume_fraction(j, s);
            if frac > 0.0 && frac <= alpha {
                let l = largest(&same_species_neighbors(cutmesh, j, s)).ok_or(
                    Error::IsolatedSmallCell {
                        cell: j,
                        species: s,
                    },
                )?;
                edges.push(((j, s), (l, s)));
            }
        }
    }
    let mut map = CutAggregationMap::new(edges)?;
    let max_rounds = cutmesh.num_cells();
    for _ in 0..max_rounds {
        let mut extra = Vec::new();
        for agg in map.aggregates(cutmesh)? {
            if agg.volume_fraction(cutmesh) > alpha {
                continue;
            }
            let mut candidates = Vec::new();
            for &j in &agg.cells {
                for (v, l) in same_species_neighbors(cutmesh, j, agg.species) {
                    if agg.cells.binary_search(&l).is_err() {
                        candidates.push((v, l, j));
                    }
                }
            }
            let pick = candidates.iter().copied().reduce(|a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            });
            match pick {
                Some((_, l, j)) => extra.push(((j, agg.species), (l, agg.species))),
                None => {
                    return Err(Error::IsolatedSmallCell {
                        cell: agg.representative(),
                        species: agg.species,
                    })
                }
            }
        }
        if extra.is_empty() {
            return Ok(map);
        }
        map = map.union(&CutAggregationMap::new(extra)?);
    }
    Ok(map)
}

/// Duplicates every background edge `{j, l}` for each species present in both cells.
pub fn lift_aggregation_to_cutcells(
    map: &AggregationMap,
    cutmesh: &CutCellMesh,
) -> CutAggregationMap {
    let mut edges = Vec::new();
    for &(j, l) in map.edges() {
        for s in Species::ALL {
            if cutmesh.volume(j, s) > 0.0 && cutmesh.volume(l, s) > 0.0 {
                edges.push(((j, s), (l, s)));
            }
        }
    }
    CutAggregationMap::new(edges).expect("lifted edges never cross species")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutcell::GeometryConfig;
    use crate::levelset::{Plane, Sphere};
    use crate::mesh::BackgroundMesh;
    use std::sync::Arc;

    fn strip(offset: f64) -> CutCellMesh {
        // 3x1 strip of unit cells on [0,3]x[0,1], plane y = offset
        let mesh = BackgroundMesh::build_cartesian(2, &[0.0, 0.0], &[3.0, 1.0], &[3, 1]).unwrap();
        let phi = Arc::new(Plane {
            normal: [0.0, 1.0, 0.0],
            offset,
        });
        CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::default()).unwrap()
    }

    #[test]
    fn zero_threshold_gives_empty_map() {
        let cm = strip(0.05);
        assert!(small_cell_agglomeration_map(&cm, 0.0).unwrap().is_empty());
    }

    /// Strip with `φ = y - h(x)`, `h` piecewise linear through `knots`; kinks
    /// sit on sub-cell boundaries of depth 3, so the geometry is exact.
    fn profile(knots: &'static [(f64, f64)]) -> CutCellMesh {
        let mesh = BackgroundMesh::build_cartesian(2, &[0.0, 0.0], &[3.0, 1.0], &[3, 1]).unwrap();
        let phi = Arc::new(crate::levelset::FnLevelSet(move |x: &[f64; 3]| {
            let i = knots
                .windows(2)
                .position(|w| x[0] <= w[1].0)
                .unwrap_or(knots.len() - 2);
            let ((x0, h0), (x1, h1)) = (knots[i], knots[i + 1]);
            x[1] - (h0 + (h1 - h0) * (x[0] - x0) / (x1 - x0))
        }));
        CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::new(3, 4)).unwrap()
    }

    #[test]
    fn picks_largest_neighbor() {
        // A fractions: cell 0 = 0.8, cell 1 = 0.08625, cell 2 = 0.3
        let cm = profile(&[
            (0.0, 0.8),
            (1.0, 0.8),
            (1.125, 0.02),
            (1.875, 0.02),
            (2.0, 0.3),
            (3.0, 0.3),
        ]);
        assert!((cm.volume_fraction(0, Species::A) - 0.8).abs() < 1e-12);
        assert!((cm.volume_fraction(1, Species::A) - 0.08625).abs() < 1e-12);
        assert!((cm.volume_fraction(2, Species::A) - 0.3).abs() < 1e-12);
        let map = small_cell_agglomeration_map(&cm, 0.1).unwrap();
        assert_eq!(map.edges(), &[((0, Species::A), (1, Species::A))]);
    }

    #[test]
    fn chained_small_cells_reach_a_large_cell() {
        // A fractions: cells 0 and 1 small, cell 2 large
        let cm = profile(&[(0.0, 0.02), (1.875, 0.02), (2.0, 0.9), (3.0, 0.9)]);
        assert!(cm.volume_fraction(1, Species::A) < 0.1);
        let map = small_cell_agglomeration_map(&cm, 0.1).unwrap();
        let aggs = map.aggregates(&cm).unwrap();
        let a: Vec<_> = aggs.iter().filter(|a| a.species == Species::A).collect();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].cells, vec![0, 1, 2]);
        for agg in &aggs {
            assert!(agg.volume_fraction(&cm) > 0.1);
        }
    }

    #[test]
    fn isolated_small_cell() {
        let mesh = BackgroundMesh::build_cartesian(2, &[0.0, 0.0], &[1.0, 1.0], &[1, 1]).unwrap();
        let phi = Arc::new(Plane {
            normal: [0.0, 1.0, 0.0],
            offset: 0.05,
        });
        let cm = CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::default()).unwrap();
        assert!(matches!(
            small_cell_agglomeration_map(&cm, 0.1),
            Err(Error::IsolatedSmallCell {
                cell: 0,
                species: Species::A
            })
        ));
    }

    #[test]
    fn lifting() {
        let cm = strip(0.5);
        let both = lift_aggregation_to_cutcells(&AggregationMap::new([(0, 1)]), &cm);
        assert_eq!(both.edges().len(), 2);
        assert!(lift_aggregation_to_cutcells(&AggregationMap::empty(), &cm).is_empty());
        // disk: edge between a cut cell and a pure-B corner cell lifts to B only
        let mesh = BackgroundMesh::unit_cube(2, 4).unwrap();
        let cm = CutCellMesh::classify_and_build(
            &mesh,
            Arc::new(Sphere {
                center: [0.0; 3],
                radius: 0.7,
            }),
            GeometryConfig::default(),
        )
        .unwrap();
        assert!(!cm.cell(0).is_cut() && cm.cell(1).is_cut());
        let m = lift_aggregation_to_cutcells(&AggregationMap::new([(0, 1)]), &cm);
        assert_eq!(m.edges(), &[((0, Species::B), (1, Species::B))]);
    }

    #[test]
    fn aggregates_are_single_species_and_cover_all_cut_cells() {
        let mesh = BackgroundMesh::unit_cube(2, 8).unwrap();
        let cm = CutCellMesh::classify_and_build(
            &mesh,
            Arc::new(Sphere {
                center: [0.0; 3],
                radius: 0.7,
            }),
            GeometryConfig::default(),
        )
        .unwrap();
        let map = small_cell_agglomeration_map(&cm, 0.3).unwrap();
        let aggs = map.aggregates(&cm).unwrap();
        let total: usize = aggs.iter().map(|a| a.cells.len()).sum();
        let expected: usize = (0..cm.num_cells())
            .map(|j| cm.cell(j).species().count())
            .sum();
        assert_eq!(total, expected);
        for a in &aggs {
            assert!(a.volume_fraction(&cm) > 0.3);
            assert!(a.cells.iter().all(|&j| cm.cell(j).has(a.species)));
        }
        assert!(CutAggregationMap::new([((0, Species::A), (1, Species::B))]).is_err());
    }
}
