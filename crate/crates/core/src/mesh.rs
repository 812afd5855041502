//! Cartesian background meshes, their face-adjacency graph and aggregation maps.
//!
//! Cells are numbered lexicographically with the x index running fastest and
//! are 0-based throughout the crate.

use petgraph::unionfind::UnionFind;

use crate::error::{Error, Result};

/// Axis-aligned box. For `dim == 2` the third axis is unused and kept at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub dim: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Aabb {
    pub fn new(dim: usize, lo: [f64; 3], hi: [f64; 3]) -> Self {
        Aabb { dim, lo, hi }
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn center(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for d in 0..self.dim {
            c[d] = 0.5 * (self.lo[d] + self.hi[d]);
        }
        c
    }

    /// D-dimensional measure.
    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|d| self.width(d)).product()
    }

    /// Total (D-1)-measure of the box boundary.
    pub fn surface(&self) -> f64 {
        (0..self.dim)
            .map(|a| {
                2.0 * (0..self.dim)
                    .filter(|&d| d != a)
                    .map(|d| self.width(d))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn contains(&self, x: &[f64; 3], tol: f64) -> bool {
        (0..self.dim).all(|d| x[d] >= self.lo[d] - tol && x[d] <= self.hi[d] + tol)
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for d in 0..self.dim {
            out.lo[d] = out.lo[d].min(other.lo[d]);
            out.hi[d] = out.hi[d].max(other.hi[d]);
        }
        out
    }

    /// The `2^D` children obtained by halving every axis, in lexicographic order.
    pub fn children(&self) -> Vec<Aabb> {
        let c = self.center();
        (0..1usize << self.dim)
            .map(|bits| {
                let mut child = *self;
                for d in 0..self.dim {
                    if bits & (1 << d) == 0 {
                        child.hi[d] = c[d];
                    } else {
                        child.lo[d] = c[d];
                    }
                }
                child
            })
            .collect()
    }

    /// Corner points in lexicographic order (bit `d` selects `hi` on axis `d`).
    pub fn corners(&self) -> Vec<[f64; 3]> {
        (0..1usize << self.dim)
            .map(|bits| {
                let mut p = [0.0; 3];
                for d in 0..self.dim {
                    p[d] = if bits & (1 << d) == 0 {
                        self.lo[d]
                    } else {
                        self.hi[d]
                    };
                }
                p
            })
            .collect()
    }
}

/// A face of the background mesh: either interior (between two cells) or on
/// the domain boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    /// Cell on the lower-coordinate side for interior faces, or the only cell
    /// for boundary faces.
    pub inner: usize,
    /// Cell on the upper-coordinate side; `None` on the boundary.
    pub outer: Option<usize>,
    pub axis: usize,
    /// Boundary side (0 = lower, 1 = upper); for interior faces always 1.
    pub side: usize,
    /// Face geometry: a box that is degenerate along `axis`.
    pub geometry: Aabb,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.outer.is_none()
    }

    /// Boundary segment id `2 * axis + side`; interior faces have none.
    pub fn boundary_id(&self) -> Option<usize> {
        self.outer.is_none().then_some(2 * self.axis + self.side)
    }

    /// Unit normal pointing from `inner` to `outer` (outward on the boundary).
    pub fn normal(&self) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[self.axis] = if self.side == 0 { -1.0 } else { 1.0 };
        n
    }

    /// (D-1)-measure of the face.
    pub fn area(&self) -> f64 {
        (0..self.geometry.dim)
            .filter(|&d| d != self.axis)
            .map(|d| self.geometry.width(d))
            .product()
    }
}

/// Cartesian partition of an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundMesh {
    domain: Aabb,
    cells_per_axis: [usize; 3],
}

impl BackgroundMesh {
    /// Builds a uniform Cartesian mesh with lexicographic (x-fastest) cell order.
    pub fn build_cartesian(
        dim: usize,
        lo: &[f64],
        hi: &[f64],
        cells_per_axis: &[usize],
    ) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidDomain(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if lo.len() != dim || hi.len() != dim || cells_per_axis.len() != dim {
            return Err(Error::InvalidDomain(format!(
                "expected {dim} bounds and cell counts per axis"
            )));
        }
        let mut domain = Aabb::new(dim, [0.0; 3], [0.0; 3]);
        let mut counts = [1usize; 3];
        for d in 0..dim {
            if !(hi[d] - lo[d] > 0.0) || !lo[d].is_finite() || !hi[d].is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "degenerate extent [{}, {}] on axis {d}",
                    lo[d], hi[d]
                )));
            }
            if cells_per_axis[d] == 0 {
                return Err(Error::InvalidDomain(format!("zero cells on axis {d}")));
            }
            domain.lo[d] = lo[d];
            domain.hi[d] = hi[d];
            counts[d] = cells_per_axis[d];
        }
        Ok(BackgroundMesh {
            domain,
            cells_per_axis: counts,
        })
    }

    /// `(-1, 1)^D` with `n` cells per axis.
    pub fn unit_cube(dim: usize, n: usize) -> Result<Self> {
        Self::build_cartesian(dim, &vec![-1.0; dim], &vec![1.0; dim], &vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn domain(&self) -> &Aabb {
        &self.domain
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis[..self.dim()]
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis().iter().product()
    }

    pub fn cell_index(&self, ijk: [usize; 3]) -> usize {
        let n = &self.cells_per_axis;
        ijk[0] + n[0] * (ijk[1] + n[1] * ijk[2])
    }

    pub fn cell_coords(&self, j: usize) -> [usize; 3] {
        let n = &self.cells_per_axis;
        [j % n[0], (j / n[0]) % n[1], j / (n[0] * n[1])]
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        self.domain.width(axis) / self.cells_per_axis[axis] as f64
    }

    pub fn cell_box(&self, j: usize) -> Aabb {
        let ijk = self.cell_coords(j);
        let mut b = self.domain;
        for d in 0..self.dim() {
            let h = self.cell_width(d);
            b.lo[d] = self.domain.lo[d] + h * ijk[d] as f64;
            b.hi[d] = if ijk[d] + 1 == self.cells_per_axis[d] {
                self.domain.hi[d]
            } else {
                self.domain.lo[d] + h * (ijk[d] + 1) as f64
            };
        }
        b
    }

    pub fn cell_volume(&self, j: usize) -> f64 {
        self.cell_box(j).volume()
    }

    /// Face-adjacent neighbour of `j` along `axis` in direction `side` (0 = -, 1 = +).
    pub fn neighbor(&self, j: usize, axis: usize, side: usize) -> Option<usize> {
        let mut ijk = self.cell_coords(j);
        if side == 0 {
            if ijk[axis] == 0 {
                return None;
            }
            ijk[axis] -= 1;
        } else {
            if ijk[axis] + 1 >= self.cells_per_axis[axis] {
                return None;
            }
            ijk[axis] += 1;
        }
        Some(self.cell_index(ijk))
    }

    /// All faces: interior faces first (ordered by lower cell, then axis),
    /// followed by boundary faces (ordered by cell, axis, side).
    pub fn faces(&self) -> Vec<Face> {
        let mut faces = Vec::new();
        for j in 0..self.num_cells() {
            let b = self.cell_box(j);
            for axis in 0..self.dim() {
                if let Some(l) = self.neighbor(j, axis, 1) {
                    let mut g = b;
                    g.lo[axis] = b.hi[axis];
                    faces.push(Face {
                        inner: j,
                        outer: Some(l),
                        axis,
                        side: 1,
                        geometry: g,
                    });
                }
            }
        }
        for j in 0..self.num_cells() {
            let b = self.cell_box(j);
            for axis in 0..self.dim() {
                for side in 0..2 {
                    if self.neighbor(j, axis, side).is_none() {
                        let mut g = b;
                        if side == 0 {
                            g.hi[axis] = b.lo[axis];
                        } else {
                            g.lo[axis] = b.hi[axis];
                        }
                        faces.push(Face {
                            inner: j,
                            outer: None,
                            axis,
                            side,
                            geometry: g,
                        });
                    }
                }
            }
        }
        faces
    }

    /// Logical-edge graph of the mesh (face-adjacent cell pairs).
    pub fn graph(&self) -> MeshGraph {
        let n = self.num_cells();
        let mut edges = Vec::new();
        for j in 0..n {
            for axis in 0..self.dim() {
                if let Some(l) = self.neighbor(j, axis, 1) {
                    edges.push((j, l));
                }
            }
        }
        MeshGraph::from_edges(n, edges)
    }
}

/// Undirected graph over cells whose edges are face-adjacent pairs `(j, l)`, `j < l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl MeshGraph {
    /// Normalizes, sorts and deduplicates edges; self-loops are dropped.
    pub fn from_edges(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        MeshGraph {
            num_nodes,
            edges,
            adjacency,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.adjacency[j]
    }

    pub fn contains_edge(&self, a: usize, b: usize) -> bool {
        let (a, b) = (a.min(b), a.max(b));
        self.edges.binary_search(&(a, b)).is_ok()
    }
}

/// Connected component of an aggregation map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aggregate {
    /// Sorted cell indices.
    pub cells: Vec<usize>,
}

impl Aggregate {
    /// Minimum contained background-cell index.
    pub fn representative(&self) -> usize {
        self.cells[0]
    }
}

/// A subset of mesh-graph edges; its connected components are the aggregate cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregationMap {
    edges: Vec<(usize, usize)>,
}

impl AggregationMap {
    pub fn new(edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut edges: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        AggregationMap { edges }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_subset_of(&self, other: &AggregationMap) -> bool {
        self.edges
            .iter()
            .all(|e| other.edges.binary_search(e).is_ok())
    }

    /// Aggregates of the map on `graph`, ordered by representative. Cells not
    /// touched by any edge come out as singletons.
    pub fn connected_components(&self, graph: &MeshGraph) -> Result<Vec<Aggregate>> {
        let n = graph.num_nodes();
        let mut uf = UnionFind::<usize>::new(n);
        for &(a, b) in &self.edges {
            if a >= n || b >= n || !graph.contains_edge(a, b) {
                return Err(Error::InvalidMap(format!(
                    "edge ({a}, {b}) is not a mesh-graph edge"
                )));
            }
            uf.union(a, b);
        }
        let labels = uf.into_labeling();
        let mut by_root: Vec<Option<usize>> = vec![None; n];
        let mut out: Vec<Aggregate> = Vec::new();
        // cells are visited in ascending order, so each aggregate's first cell is its minimum
        for (j, &root) in labels.iter().enumerate() {
            match by_root[root] {
                Some(k) => out[k].cells.push(j),
                None => {
                    by_root[root] = Some(out.len());
                    out.push(Aggregate { cells: vec![j] });
                }
            }
        }
        Ok(out)
    }
}

/// Nested background aggregation maps `A^1 = {} ⊂ A^2 ⊂ ... ⊂ A^levels`.
///
/// Level `λ` groups cells into index blocks of width `2^(λ-1)` per axis; the
/// cells left over at the end of an axis are absorbed into the last block, so
/// meshes that are not a power of two still produce nested maps.
pub fn multigrid_aggregation_sequence(
    mesh: &BackgroundMesh,
    levels: usize,
) -> Result<Vec<AggregationMap>> {
    if levels < 1 {
        return Err(Error::InvalidConfig(
            "number of multigrid levels must be >= 1".into(),
        ));
    }
    let graph = mesh.graph();
    let mut maps = Vec::with_capacity(levels);
    maps.push(AggregationMap::empty());
    for level in 2..=levels {
        let width = 1usize << (level - 1);
        let block_of = |axis: usize, i: usize| -> usize {
            let n = mesh.cells_per_axis[axis];
            let nblocks = (n / width).max(1);
            (i / width).min(nblocks - 1)
        };
        let edges = graph.edges().iter().copied().filter(|&(a, b)| {
            let (ca, cb) = (mesh.cell_coords(a), mesh.cell_coords(b));
            (0..mesh.dim()).all(|d| block_of(d, ca[d]) == block_of(d, cb[d]))
        });
        maps.push(AggregationMap::new(edges));
    }
    Ok(maps)
}
