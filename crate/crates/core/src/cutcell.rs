//! Cell classification and cut-cell quadrature.
//!
//! Cut cells are recursively split into `2^D` children up to `quad_depth`.
//! Children on which the level-set has a uniform sign receive tensor Gauss
//! rules. Children that are still cut (or on which `φ` is found to be affine)
//! become leaves: `φ` is replaced by the affine least-squares fit of its corner
//! values, the leaf is split into Kuhn simplices and every simplex is clipped
//! against the affine zero set. The resulting sub-simplices carry Gauss rules
//! that are exact for the linearized geometry, so planar interfaces are
//! integrated exactly at any depth.
//!
//! Faces adjacent to a cut cell are treated the same way one dimension lower.

use std::sync::Arc;

use crate::basis::ReferenceBasis;
use crate::error::{Error, Result};
use crate::levelset::{gradient_or_fd, LevelSet};
use crate::mesh::{Aabb, BackgroundMesh, Face};
use crate::quadrature::{norm, QuadRule, ReferenceRules};
use crate::Species;

/// Species volumes below this fraction of the cell volume are treated as absent.
const PRESENCE_TOL: f64 = 1e-14;

/// Probe points per axis when testing sub-cells for a uniform sign.
const SUBCELL_PROBES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConfig {
    /// Maximum subdivision depth for cut cells and faces.
    pub quad_depth: usize,
    /// Polynomial degree integrated exactly by all rules.
    pub gauss_order: usize,
    /// Replace the subdivision rule of each cut-cell volume by a tensor rule
    /// with the same moments up to `gauss_order`.
    pub compress: bool,
}

impl GeometryConfig {
    pub fn new(quad_depth: usize, gauss_order: usize) -> Self {
        GeometryConfig {
            quad_depth,
            gauss_order,
            compress: true,
        }
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            quad_depth: 3,
            gauss_order: 6,
            compress: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Pure(Species),
    Cut,
}

#[derive(Debug, Clone)]
pub struct CutCell {
    pub kind: CellKind,
    /// `|K_{j,A}|`, `|K_{j,B}|`.
    pub volume: [f64; 2],
    volume_rules: [Option<QuadRule>; 2],
    interface: Option<QuadRule>,
    /// Measure of each species on each local face `2 * axis + side`.
    face_measure: Vec<[f64; 2]>,
}

impl CutCell {
    pub fn has(&self, s: Species) -> bool {
        match self.kind {
            CellKind::Pure(p) => p == s,
            CellKind::Cut => true,
        }
    }

    pub fn is_cut(&self) -> bool {
        self.kind == CellKind::Cut
    }

    /// Species present in the cell, A before B.
    pub fn species(&self) -> impl Iterator<Item = Species> + '_ {
        Species::ALL.into_iter().filter(|&s| self.has(s))
    }

    pub fn interface_measure(&self) -> f64 {
        self.interface.as_ref().map_or(0.0, |r| r.measure())
    }

    /// Measure of species `s` on local face `2 * axis + side`.
    pub fn face_measure(&self, local_face: usize, s: Species) -> f64 {
        self.face_measure[local_face][s.index()]
    }
}

/// Part of a mesh face or of the interface over which two (cell, species)
/// pairs are coupled. Boundary pieces have no outer side.
#[derive(Debug, Clone)]
pub struct SkeletonPiece {
    pub inner: (usize, Species),
    pub outer: Option<(usize, Species)>,
    pub kind: PieceKind,
    pub rule: QuadRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    /// Portion of background face `face` (index into [`CutCellMesh::faces`]).
    Face { face: usize },
    /// Interface inside a cut cell; inner is A, outer is B, normals from the rule.
    Interface,
}

impl SkeletonPiece {
    /// True if the two sides carry different species.
    pub fn is_interface_like(&self) -> bool {
        matches!(self.outer, Some((_, s)) if s != self.inner.1)
    }
}

/// Background mesh plus per-species cut-cell geometry and quadrature.
pub struct CutCellMesh {
    mesh: BackgroundMesh,
    phi: Arc<dyn LevelSet>,
    config: GeometryConfig,
    cells: Vec<CutCell>,
    faces: Vec<Face>,
    pieces: Vec<SkeletonPiece>,
}

impl std::fmt::Debug for CutCellMesh {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CutCellMesh")
            .field("cells", &self.cells.len())
            .field("cut", &self.num_cut_cells())
            .field("config", &self.config)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sign {
    Neg,
    Pos,
    Mixed,
    Zero,
}

fn classify_values(values: impl Iterator<Item = f64>) -> Sign {
    let (mut neg, mut pos) = (false, false);
    for v in values {
        if v < 0.0 {
            neg = true;
        } else if v > 0.0 {
            pos = true;
        }
        if neg && pos {
            return Sign::Mixed;
        }
    }
    match (neg, pos) {
        (true, false) => Sign::Neg,
        (false, true) => Sign::Pos,
        (false, false) => Sign::Zero,
        (true, true) => Sign::Mixed,
    }
}

/// Equispaced lattice with `n` points per listed axis, including the end points.
fn lattice(b: &Aabb, axes: &[usize], n: usize) -> Vec<[f64; 3]> {
    let total = n.pow(axes.len() as u32);
    (0..total)
        .map(|idx| {
            let mut p = b.lo;
            let mut rem = idx;
            for &a in axes {
                let i = rem % n;
                rem /= n;
                p[a] = b.lo[a] + b.width(a) * i as f64 / (n - 1) as f64;
            }
            p
        })
        .collect()
}

/// Corners of the box restricted to `axes` (bit `i` selects `hi` on `axes[i]`).
fn sub_corners(b: &Aabb, axes: &[usize]) -> Vec<[f64; 3]> {
    (0..1usize << axes.len())
        .map(|bits| {
            let mut p = b.lo;
            for (i, &a) in axes.iter().enumerate() {
                if bits & (1 << i) != 0 {
                    p[a] = b.hi[a];
                }
            }
            p
        })
        .collect()
}

/// Affine function `value + gradient · (x - center)`.
#[derive(Debug, Clone, Copy)]
struct Affine {
    center: [f64; 3],
    value: f64,
    gradient: [f64; 3],
}

impl Affine {
    /// Least-squares fit to the corner values of the box over `axes`. On a box
    /// the normal equations decouple: the constant is the corner mean and each
    /// slope is the mean difference between the upper and lower corner sets.
    fn fit(b: &Aabb, axes: &[usize], phi: &dyn LevelSet) -> Affine {
        let corners = sub_corners(b, axes);
        let values: Vec<f64> = corners.iter().map(|p| phi.value(p)).collect();
        let m = values.len() as f64;
        let mut gradient = [0.0; 3];
        for (i, &a) in axes.iter().enumerate() {
            let (mut hi, mut lo) = (0.0, 0.0);
            for (bits, v) in values.iter().enumerate() {
                if bits & (1 << i) != 0 {
                    hi += v;
                } else {
                    lo += v;
                }
            }
            gradient[a] = (hi - lo) / (0.5 * m) / b.width(a);
        }
        let mut center = b.lo;
        for &a in axes {
            center[a] = 0.5 * (b.lo[a] + b.hi[a]);
        }
        Affine {
            center,
            value: values.iter().sum::<f64>() / m,
            gradient,
        }
    }

    fn eval(&self, x: &[f64; 3]) -> f64 {
        self.value
            + self.gradient[0] * (x[0] - self.center[0])
            + self.gradient[1] * (x[1] - self.center[1])
            + self.gradient[2] * (x[2] - self.center[2])
    }

    /// True if `phi` coincides with the fit on a probe lattice up to round-off.
    fn matches(&self, b: &Aabb, axes: &[usize], phi: &dyn LevelSet) -> bool {
        let scale = self.value.abs()
            + axes
                .iter()
                .map(|&a| self.gradient[a].abs() * b.width(a))
                .sum::<f64>();
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        lattice(b, axes, 3)
            .iter()
            .all(|p| (phi.value(p) - self.eval(p)).abs() <= tol)
    }
}

/// Kuhn (Freudenthal) triangulation of the box over `axes` into `|axes|!` simplices.
fn kuhn_simplices(b: &Aabb, axes: &[usize]) -> Vec<Vec<[f64; 3]>> {
    let mut perms: Vec<Vec<usize>> = vec![vec![]];
    for k in 0..axes.len() {
        let mut next = Vec::new();
        for p in &perms {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k);
                next.push(q);
            }
        }
        perms = next;
    }
    perms
        .into_iter()
        .map(|perm| {
            let mut v = b.lo;
            let mut verts = vec![v];
            for i in perm {
                v[axes[i]] = b.hi[axes[i]];
                verts.push(v);
            }
            verts
        })
        .collect()
}

fn lerp(a: &[f64; 3], b: &[f64; 3], va: f64, vb: f64) -> [f64; 3] {
    let t = va / (va - vb);
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// Prism with corresponding triangles `a` and `b` as three tetrahedra.
fn prism_tets(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [Vec<[f64; 3]>; 3] {
    [
        vec![a[0], a[1], a[2], b[0]],
        vec![a[1], a[2], b[0], b[1]],
        vec![a[2], b[0], b[1], b[2]],
    ]
}

#[derive(Default)]
struct Clipped {
    neg: Vec<Vec<[f64; 3]>>,
    pos: Vec<Vec<[f64; 3]>>,
    zero: Vec<Vec<[f64; 3]>>,
}

/// Splits a simplex (2, 3 or 4 vertices) along the zero set of an affine
/// function given by its vertex values. Vertices with value `<= 0` count as negative.
fn clip_simplex(verts: &[[f64; 3]], vals: &[f64], out: &mut Clipped) {
    let neg: Vec<usize> = (0..verts.len()).filter(|&i| vals[i] <= 0.0).collect();
    let pos: Vec<usize> = (0..verts.len()).filter(|&i| vals[i] > 0.0).collect();
    if pos.is_empty() {
        out.neg.push(verts.to_vec());
        return;
    }
    if neg.is_empty() {
        out.pos.push(verts.to_vec());
        return;
    }
    let cut = |i: usize, j: usize| lerp(&verts[i], &verts[j], vals[i], vals[j]);
    match verts.len() {
        2 => {
            let (n, p) = (neg[0], pos[0]);
            let x = cut(n, p);
            out.neg.push(vec![verts[n], x]);
            out.pos.push(vec![x, verts[p]]);
            out.zero.push(vec![x]);
        }
        3 => {
            // one lonely vertex on one side, two on the other
            let (lonely, pair, lonely_neg) = if neg.len() == 1 {
                (neg[0], [pos[0], pos[1]], true)
            } else {
                (pos[0], [neg[0], neg[1]], false)
            };
            let x0 = cut(lonely, pair[0]);
            let x1 = cut(lonely, pair[1]);
            let tri = vec![verts[lonely], x0, x1];
            let quad = [
                vec![x0, verts[pair[0]], verts[pair[1]]],
                vec![x0, verts[pair[1]], x1],
            ];
            let (lonely_side, pair_side) = if lonely_neg {
                (&mut out.neg, &mut out.pos)
            } else {
                (&mut out.pos, &mut out.neg)
            };
            lonely_side.push(tri);
            pair_side.extend(quad);
            out.zero.push(vec![x0, x1]);
        }
        4 => {
            if neg.len() == 1 || pos.len() == 1 {
                let (lonely, rest, lonely_neg) = if neg.len() == 1 {
                    (neg[0], [pos[0], pos[1], pos[2]], true)
                } else {
                    (pos[0], [neg[0], neg[1], neg[2]], false)
                };
                let x = [
                    cut(lonely, rest[0]),
                    cut(lonely, rest[1]),
                    cut(lonely, rest[2]),
                ];
                let tet = vec![verts[lonely], x[0], x[1], x[2]];
                let prism = prism_tets(x, [verts[rest[0]], verts[rest[1]], verts[rest[2]]]);
                let (lonely_side, rest_side) = if lonely_neg {
                    (&mut out.neg, &mut out.pos)
                } else {
                    (&mut out.pos, &mut out.neg)
                };
                lonely_side.push(tet);
                rest_side.extend(prism);
                out.zero.push(x.to_vec());
            } else {
                let (i, j) = (neg[0], neg[1]);
                let (k, l) = (pos[0], pos[1]);
                let (xik, xil, xjk, xjl) = (cut(i, k), cut(i, l), cut(j, k), cut(j, l));
                out.neg
                    .extend(prism_tets([verts[i], xik, xil], [verts[j], xjk, xjl]));
                out.pos
                    .extend(prism_tets([verts[k], xik, xjk], [verts[l], xil, xjl]));
                out.zero.push(vec![xik, xjk, xjl]);
                out.zero.push(vec![xik, xjl, xil]);
            }
        }
        n => panic!("cannot clip simplex with {n} vertices"),
    }
}

struct Builder<'a> {
    phi: &'a dyn LevelSet,
    rules: ReferenceRules,
    config: GeometryConfig,
    dim: usize,
    fd_step: f64,
}

/// Per-species rules plus the interface rule produced by subdivision.
#[derive(Default)]
struct SplitRules {
    species: [QuadRule; 2],
    interface: QuadRule,
}

impl Builder<'_> {
    fn sign_on(&self, b: &Aabb, axes: &[usize], n: usize) -> Sign {
        classify_values(lattice(b, axes, n).iter().map(|p| self.phi.value(p)))
    }

    /// Subdivision rules on the box over `axes`. With `interface` set, the
    /// zero-set pieces are collected (volume case); otherwise they are ignored.
    fn subdivide(
        &self,
        b: &Aabb,
        axes: &[usize],
        depth: usize,
        with_interface: bool,
        out: &mut SplitRules,
    ) {
        let sign = if depth == 0 {
            Sign::Mixed
        } else {
            self.sign_on(b, axes, SUBCELL_PROBES)
        };
        match sign {
            Sign::Neg => out.species[0].append(self.rules.tensor_rule(b, axes)),
            Sign::Pos => out.species[1].append(self.rules.tensor_rule(b, axes)),
            Sign::Mixed | Sign::Zero => {
                let fit = Affine::fit(b, axes, self.phi);
                if depth >= self.config.quad_depth
                    || sign == Sign::Zero
                    || fit.matches(b, axes, self.phi)
                {
                    self.leaf(b, axes, &fit, with_interface, out);
                } else {
                    for child in children(b, axes) {
                        self.subdivide(&child, axes, depth + 1, with_interface, out);
                    }
                }
            }
        }
    }

    fn leaf(
        &self,
        b: &Aabb,
        axes: &[usize],
        fit: &Affine,
        with_interface: bool,
        out: &mut SplitRules,
    ) {
        let measure: f64 = axes.iter().map(|&a| b.width(a)).product();
        let mut clipped = Clipped::default();
        for simplex in kuhn_simplices(b, axes) {
            let vals: Vec<f64> = simplex.iter().map(|p| fit.eval(p)).collect();
            clip_simplex(&simplex, &vals, &mut clipped);
        }
        let keep = |s: &Vec<[f64; 3]>| simplex_measure(s) > 1e-15 * measure;
        for s in clipped.neg.iter().filter(|s| keep(s)) {
            self.rules.simplex_rule(s, &mut out.species[0]);
        }
        for s in clipped.pos.iter().filter(|s| keep(s)) {
            self.rules.simplex_rule(s, &mut out.species[1]);
        }
        if with_interface {
            let face_scale = measure / b.width(axes[0]).max(f64::MIN_POSITIVE);
            for s in clipped.zero.iter().filter(|s| s.len() >= 2) {
                if simplex_measure(s) <= 1e-15 * face_scale {
                    continue;
                }
                let mut piece = QuadRule::default();
                self.rules.simplex_rule(s, &mut piece);
                let normals = piece
                    .nodes
                    .iter()
                    .map(|x| self.unit_normal(x))
                    .collect::<Vec<_>>();
                piece.normals = Some(normals);
                if out.interface.is_empty() {
                    out.interface = piece;
                } else {
                    out.interface.append(piece);
                }
            }
        }
    }

    fn unit_normal(&self, x: &[f64; 3]) -> [f64; 3] {
        let g = gradient_or_fd(self.phi, x, self.dim, self.fd_step);
        let n = norm(&g);
        if n == 0.0 {
            return [0.0; 3];
        }
        [g[0] / n, g[1] / n, g[2] / n]
    }
}

fn children(b: &Aabb, axes: &[usize]) -> Vec<Aabb> {
    let mut out = vec![*b];
    for &a in axes {
        let mid = 0.5 * (b.lo[a] + b.hi[a]);
        out = out
            .into_iter()
            .flat_map(|c| {
                let mut lo = c;
                let mut hi = c;
                lo.hi[a] = mid;
                hi.lo[a] = mid;
                [lo, hi]
            })
            .collect();
    }
    out
}

fn simplex_measure(s: &[[f64; 3]]) -> f64 {
    use crate::quadrature::{cross, dot, sub};
    match s.len() {
        1 => 0.0,
        2 => norm(&sub(&s[1], &s[0])),
        3 => 0.5 * norm(&cross(&sub(&s[1], &s[0]), &sub(&s[2], &s[0]))),
        4 => {
            dot(
                &sub(&s[1], &s[0]),
                &cross(&sub(&s[2], &s[0]), &sub(&s[3], &s[0])),
            )
            .abs()
                / 6.0
        }
        _ => 0.0,
    }
}

impl CutCellMesh {
    /// Classifies every cell and builds all volume, interface and face rules.
    pub fn classify_and_build(
        mesh: &BackgroundMesh,
        phi: Arc<dyn LevelSet>,
        config: GeometryConfig,
    ) -> Result<Self> {
        if config.gauss_order < 1 {
            return Err(Error::InvalidConfig("gauss_order must be >= 1".into()));
        }
        let dim = mesh.dim();
        let width = (0..dim).map(|d| mesh.domain().width(d)).fold(0.0, f64::max);
        let builder = Builder {
            phi: phi.as_ref(),
            rules: ReferenceRules::new(config.gauss_order),
            config,
            dim,
            fd_step: 1e-6 * width,
        };
        let axes: Vec<usize> = (0..dim).collect();
        let probes_1d = crate::quadrature::gauss_legendre(config.gauss_order + 2).0;

        let mut cells = Vec::with_capacity(mesh.num_cells());
        for j in 0..mesh.num_cells() {
            let b = mesh.cell_box(j);
            let kind = classify_cell(&b, phi.as_ref(), &probes_1d, j)?;
            let vol = b.volume();
            let cell = match kind {
                Sign::Neg | Sign::Pos => {
                    let s = if kind == Sign::Neg {
                        Species::A
                    } else {
                        Species::B
                    };
                    pure_cell(&builder, &b, s)
                }
                _ => {
                    let mut split = SplitRules::default();
                    builder.subdivide(&b, &axes, 0, true, &mut split);
                    let va = split.species[0].measure();
                    let vb = split.species[1].measure();
                    let [mut ra, mut rb] = split.species;
                    if config.compress {
                        ra = compress(&ra, &b, config.gauss_order);
                        rb = compress(&rb, &b, config.gauss_order);
                    }
                    if va <= PRESENCE_TOL * vol {
                        pure_cell(&builder, &b, Species::B)
                    } else if vb <= PRESENCE_TOL * vol {
                        pure_cell(&builder, &b, Species::A)
                    } else {
                        CutCell {
                            kind: CellKind::Cut,
                            volume: [va, vb],
                            volume_rules: [Some(ra), Some(rb)],
                            interface: Some(split.interface),
                            face_measure: vec![[0.0; 2]; 2 * dim],
                        }
                    }
                }
            };
            cells.push(cell);
        }

        let faces = mesh.faces();
        let mut pieces = Vec::new();
        for (fi, face) in faces.iter().enumerate() {
            face_pieces(&builder, &cells, fi, face, &mut pieces);
        }
        for p in &pieces {
            if let PieceKind::Face { face } = p.kind {
                let f = &faces[face];
                let m = p.rule.measure();
                let (j, s) = p.inner;
                let local_inner = 2 * f.axis + f.side;
                cells[j].face_measure[local_inner][s.index()] += m;
                if let Some((l, s2)) = p.outer {
                    cells[l].face_measure[2 * f.axis][s2.index()] += m;
                }
            }
        }
        for (j, cell) in cells.iter().enumerate() {
            if let Some(rule) = &cell.interface {
                if !rule.is_empty() {
                    pieces.push(SkeletonPiece {
                        inner: (j, Species::A),
                        outer: Some((j, Species::B)),
                        kind: PieceKind::Interface,
                        rule: rule.clone(),
                    });
                }
            }
        }

        Ok(CutCellMesh {
            mesh: mesh.clone(),
            phi,
            config,
            cells,
            faces,
            pieces,
        })
    }

    pub fn background(&self) -> &BackgroundMesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn level_set(&self) -> &dyn LevelSet {
        self.phi.as_ref()
    }

    pub fn config(&self) -> GeometryConfig {
        self.config
    }

    pub fn cells(&self) -> &[CutCell] {
        &self.cells
    }

    pub fn cell(&self, j: usize) -> &CutCell {
        &self.cells[j]
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_cut_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_cut()).count()
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// All coupling pieces: face portions first (in face order), then the
    /// interface pieces of the cut cells (in cell order).
    pub fn skeleton(&self) -> &[SkeletonPiece] {
        &self.pieces
    }

    pub fn volume(&self, j: usize, s: Species) -> f64 {
        self.cells[j].volume[s.index()]
    }

    /// `|K_{j,s}| / |K_j|`.
    pub fn volume_fraction(&self, j: usize, s: Species) -> f64 {
        self.volume(j, s) / self.mesh.cell_volume(j)
    }

    /// Volume rule of species `s` in cell `j`.
    pub fn quad_volume(&self, j: usize, s: Species) -> Result<&QuadRule> {
        self.cells[j].volume_rules[s.index()]
            .as_ref()
            .ok_or(Error::MissingSpecies {
                cell: j,
                species: s,
            })
    }

    /// Interface rule of a cut cell; normals point from A into B.
    pub fn quad_interface(&self, j: usize) -> Result<&QuadRule> {
        match &self.cells[j].interface {
            Some(r) if self.cells[j].is_cut() => Ok(r),
            _ => Err(Error::MissingInterface { cell: j }),
        }
    }

    /// Rule over the part of face `face` that lies in species `s`, collected
    /// from all skeleton pieces on that face touching `s`.
    pub fn quad_cut_face(&self, face: usize, s: Species) -> Result<QuadRule> {
        let mut rule = QuadRule::default();
        let mut found = false;
        for p in &self.pieces {
            if p.kind != (PieceKind::Face { face }) {
                continue;
            }
            let touches = p.inner.1 == s || p.outer.is_some_and(|o| o.1 == s);
            if touches {
                found = true;
                rule.append(p.rule.clone());
            }
        }
        if !found {
            return Err(Error::MissingSpecies {
                cell: self.faces[face].inner,
                species: s,
            });
        }
        Ok(rule)
    }
}

/// Moment fitting onto the tensor Gauss nodes of `cell`: with `n = q + 1`
/// points per axis the box rule `W` is exact for products of degree-`q`
/// orthonormal modes, so the weights `W Aᵀ m` reproduce all moments `m`
/// of the input rule up to degree `q`.
fn compress(rule: &QuadRule, cell: &Aabb, q: usize) -> QuadRule {
    let basis = ReferenceBasis::new(q, cell.dim);
    let n = basis.len();
    let mut v = vec![0.0; n];
    let mut moments = vec![0.0; n];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        basis.values(cell, x, &mut v);
        for (m, vi) in moments.iter_mut().zip(&v) {
            *m += w * vi;
        }
    }
    let mut out = ReferenceRules::new(2 * q + 1).box_rule(cell);
    for (x, w) in out.nodes.iter().zip(out.weights.iter_mut()) {
        basis.values(cell, x, &mut v);
        *w *= v.iter().zip(&moments).map(|(a, b)| a * b).sum::<f64>();
    }
    out
}

fn classify_cell(b: &Aabb, phi: &dyn LevelSet, probes_1d: &[f64], j: usize) -> Result<Sign> {
    let dim = b.dim;
    let n = probes_1d.len();
    let mut values = Vec::with_capacity(n.pow(dim as u32) + (1 << dim));
    for idx in 0..n.pow(dim as u32) {
        let mut p = [0.0; 3];
        let mut rem = idx;
        for d in 0..dim {
            let t = probes_1d[rem % n];
            rem /= n;
            p[d] = b.lo[d] + 0.5 * (t + 1.0) * b.width(d);
        }
        values.push(phi.value(&p));
    }
    values.extend(b.corners().iter().map(|p| phi.value(p)));
    if values.iter().all(|v| v.abs() < 1e-12) {
        return Err(Error::DegenerateLevelSet { cell: j });
    }
    Ok(classify_values(values.into_iter()))
}

fn pure_cell(builder: &Builder<'_>, b: &Aabb, s: Species) -> CutCell {
    let mut volume = [0.0; 2];
    volume[s.index()] = b.volume();
    let mut volume_rules = [None, None];
    volume_rules[s.index()] = Some(builder.rules.box_rule(b));
    CutCell {
        kind: CellKind::Pure(s),
        volume,
        volume_rules,
        interface: None,
        face_measure: vec![[0.0; 2]; 2 * b.dim],
    }
}

/// Species to use on one side of a face for a face portion of species `s`:
/// `s` itself if present in the cell, otherwise the cell's other species.
fn side_species(cell: &CutCell, s: Species) -> Species {
    if cell.has(s) {
        s
    } else {
        s.other()
    }
}

fn face_pieces(
    builder: &Builder<'_>,
    cells: &[CutCell],
    fi: usize,
    face: &Face,
    pieces: &mut Vec<SkeletonPiece>,
) {
    let axes: Vec<usize> = (0..face.geometry.dim).filter(|&d| d != face.axis).collect();
    let inner = &cells[face.inner];
    let outer = face.outer.map(|l| &cells[l]);
    let area = face.area();

    let any_cut = inner.is_cut() || outer.is_some_and(|c| c.is_cut());
    let portions: Vec<(Species, QuadRule)> = if any_cut {
        let mut split = SplitRules::default();
        if axes.is_empty() {
            // 1D domain faces do not occur (dim >= 2)
            unreachable!();
        }
        builder.subdivide(&face.geometry, &axes, 0, false, &mut split);
        let [ra, rb] = split.species;
        [(Species::A, ra), (Species::B, rb)]
            .into_iter()
            .filter(|(_, r)| r.measure() > PRESENCE_TOL * area)
            .collect()
    } else {
        let s = match inner.kind {
            CellKind::Pure(s) => s,
            CellKind::Cut => unreachable!(),
        };
        vec![(s, builder.rules.tensor_rule(&face.geometry, &axes))]
    };

    for (s, rule) in portions {
        let s_in = side_species(inner, s);
        let outer_side = face
            .outer
            .zip(outer)
            .map(|(l, cell)| (l, side_species(cell, s)));
        pieces.push(SkeletonPiece {
            inner: (face.inner, s_in),
            outer: outer_side,
            kind: PieceKind::Face { face: fi },
            rule,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{Constant, FnLevelSet, Plane, Sphere};

    fn disk_mesh(n: usize, depth: usize) -> CutCellMesh {
        let mesh = BackgroundMesh::unit_cube(2, n).unwrap();
        let phi = Arc::new(Sphere {
            center: [0.0; 3],
            radius: 0.7,
        });
        CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::new(depth, 4)).unwrap()
    }

    #[test]
    fn disk_all_four_cells_cut() {
        let cm = disk_mesh(2, 3);
        assert_eq!(cm.num_cut_cells(), 4);
        // sign-sampling oracle on a 100^2 lattice per cell
        let mesh = cm.background();
        for j in 0..4 {
            let b = mesh.cell_box(j);
            let (mut neg, mut pos) = (false, false);
            for p in lattice(&b, &[0, 1], 100) {
                let v = p[0] * p[0] + p[1] * p[1] - 0.49;
                neg |= v < 0.0;
                pos |= v > 0.0;
            }
            assert_eq!(neg && pos, cm.cell(j).is_cut());
        }
    }

    #[test]
    fn constant_level_set_is_pure() {
        let mesh = BackgroundMesh::unit_cube(2, 3).unwrap();
        let cm = CutCellMesh::classify_and_build(
            &mesh,
            Arc::new(Constant(-1.0)),
            GeometryConfig::default(),
        )
        .unwrap();
        for j in 0..9 {
            assert_eq!(cm.cell(j).kind, CellKind::Pure(Species::A));
            assert_eq!(cm.volume_fraction(j, Species::A), 1.0);
        }
    }

    #[test]
    fn interface_on_mesh_face_gives_pure_cells() {
        let mesh = BackgroundMesh::unit_cube(2, 2).unwrap();
        let phi = Arc::new(Plane {
            normal: [1.0, 0.0, 0.0],
            offset: 0.0,
        });
        let cm = CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::default()).unwrap();
        for j in 0..4 {
            assert!(!cm.cell(j).is_cut());
            let s = if mesh.cell_box(j).lo[0] < 0.0 {
                Species::A
            } else {
                Species::B
            };
            assert_eq!(cm.volume_fraction(j, s), 1.0);
        }
        // the face x = 0 couples the two species directly
        let iface: Vec<_> = cm
            .skeleton()
            .iter()
            .filter(|p| p.is_interface_like())
            .collect();
        assert_eq!(iface.len(), 2);
        let total: f64 = iface.iter().map(|p| p.rule.measure()).sum();
        assert!((total - 2.0).abs() < 1e-13);
    }

    #[test]
    fn degenerate_level_set() {
        let mesh = BackgroundMesh::unit_cube(2, 2).unwrap();
        let r = CutCellMesh::classify_and_build(
            &mesh,
            Arc::new(Constant(0.0)),
            GeometryConfig::default(),
        );
        assert!(matches!(r, Err(Error::DegenerateLevelSet { .. })));
    }

    #[test]
    fn disk_area_and_perimeter() {
        let cm = disk_mesh(2, 5);
        let area: f64 = (0..4)
            .map(|j| cm.quad_volume(j, Species::A).unwrap().measure())
            .sum();
        let exact = std::f64::consts::PI * 0.49;
        assert!((area - exact).abs() / exact <= 1e-3, "area {area}");
        let perimeter: f64 = (0..4)
            .map(|j| cm.quad_interface(j).unwrap().measure())
            .sum();
        let exact = 2.0 * std::f64::consts::PI * 0.7;
        assert!(
            (perimeter - exact).abs() / exact <= 1e-2,
            "perimeter {perimeter}"
        );
    }

    #[test]
    fn disk_normals_radial_and_unit() {
        let cm = disk_mesh(2, 4);
        for j in 0..4 {
            let r = cm.quad_interface(j).unwrap();
            for (x, n) in r.nodes.iter().zip(r.normals.as_ref().unwrap()) {
                assert!((norm(n) - 1.0).abs() <= 1e-12);
                let rx = norm(x);
                assert!(n[0] * x[0] + n[1] * x[1] > 0.99 * rx);
            }
            assert!(r.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn partition_of_measure() {
        let cm = disk_mesh(4, 3);
        for j in 0..cm.num_cells() {
            let v = cm.background().cell_volume(j);
            let total: f64 = cm
                .cell(j)
                .species()
                .map(|s| cm.quad_volume(j, s).unwrap().measure())
                .sum();
            assert!((total - v).abs() <= 1e-10 * v);
        }
    }

    #[test]
    fn refinement_convergence_of_disk_area() {
        let exact = std::f64::consts::PI * 0.49;
        let err = |depth| {
            let cm = disk_mesh(2, depth);
            let a: f64 = (0..4).map(|j| cm.volume(j, Species::A)).sum();
            (a - exact).abs()
        };
        for depth in 2..5 {
            let (e0, e1) = (err(depth), err(depth + 1));
            assert!(e0 / e1 >= 3.0, "depth {depth}: {e0} -> {e1}");
        }
    }

    #[test]
    fn planar_cut_exact_in_unit_cube() {
        let mesh = BackgroundMesh::build_cartesian(3, &[0.0; 3], &[1.0; 3], &[1, 1, 1]).unwrap();
        let phi = Arc::new(Plane {
            normal: [1.0, 0.0, 0.0],
            offset: 0.25,
        });
        let cm = CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::default()).unwrap();
        assert!(cm.cell(0).is_cut());
        assert!((cm.volume(0, Species::A) - 0.25).abs() < 1e-14);
        assert!((cm.volume(0, Species::B) - 0.75).abs() < 1e-14);
        assert!((cm.quad_interface(0).unwrap().measure() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn oblique_plane_exact_measures() {
        // plane x + y + z = 1 through the unit cube cuts off a corner tetrahedron of volume 1/6
        let mesh = BackgroundMesh::build_cartesian(3, &[0.0; 3], &[1.0; 3], &[1, 1, 1]).unwrap();
        let s = 1.0 / 3f64.sqrt();
        let phi = Arc::new(Plane {
            normal: [s, s, s],
            offset: s,
        });
        let cm = CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::default()).unwrap();
        assert!((cm.volume(0, Species::A) - 1.0 / 6.0).abs() < 1e-12);
        let tri_area = 3f64.sqrt() / 2.0;
        assert!((cm.quad_interface(0).unwrap().measure() - tri_area).abs() < 1e-12);
        // three faces through the origin each carry a right triangle of area 1/2 in A
        let a_face: f64 = (0..cm.faces().len())
            .filter_map(|f| cm.quad_cut_face(f, Species::A).ok())
            .map(|r| r.measure())
            .sum();
        assert!((a_face - 1.5).abs() < 1e-12);
    }

    #[test]
    fn face_split_by_horizontal_line() {
        let mesh = BackgroundMesh::build_cartesian(2, &[-1.0, -1.0], &[1.0, 1.0], &[2, 1]).unwrap();
        let phi = Arc::new(Plane {
            normal: [0.0, 1.0, 0.0],
            offset: 0.0,
        });
        let cm = CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::default()).unwrap();
        let f = cm.faces().iter().position(|f| !f.is_boundary()).unwrap();
        for s in Species::ALL {
            let r = cm.quad_cut_face(f, s).unwrap();
            assert!((r.measure() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn quad_errors() {
        let cm = disk_mesh(4, 2);
        // corner cell (0) is pure B
        assert!(matches!(
            cm.quad_volume(0, Species::A),
            Err(Error::MissingSpecies { .. })
        ));
        assert!(matches!(
            cm.quad_interface(0),
            Err(Error::MissingInterface { .. })
        ));
    }

    #[test]
    fn linear_fn_level_set_without_gradient() {
        let mesh = BackgroundMesh::build_cartesian(2, &[0.0; 2], &[1.0; 2], &[1, 1]).unwrap();
        let phi = Arc::new(FnLevelSet(|x: &[f64; 3]| x[0] - 0.25));
        let cm = CutCellMesh::classify_and_build(&mesh, phi, GeometryConfig::default()).unwrap();
        let r = cm.quad_interface(0).unwrap();
        assert!((r.measure() - 1.0).abs() < 1e-14);
        for n in r.normals.as_ref().unwrap() {
            assert!((n[0] - 1.0).abs() < 1e-9);
        }
    }
}
