use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sparse matrix of dense blocks. Block rows and columns are given by offset
/// vectors; each block row keeps its blocks sorted by block column.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseMatrix {
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    rows: Vec<Vec<(usize, DMatrix<f64>)>>,
}

impl BlockSparseMatrix {
    pub fn new(row_offsets: Vec<usize>, col_offsets: Vec<usize>) -> Self {
        assert!(!row_offsets.is_empty() && !col_offsets.is_empty());
        let nb = row_offsets.len() - 1;
        BlockSparseMatrix {
            row_offsets,
            col_offsets,
            rows: vec![Vec::new(); nb],
        }
    }

    pub fn identity(offsets: Vec<usize>) -> Self {
        let mut m = Self::new(offsets.clone(), offsets);
        for b in 0..m.num_block_rows() {
            let n = m.row_block_size(b);
            m.add_block(b, b, &DMatrix::identity(n, n));
        }
        m
    }

    /// Splits a dense matrix into blocks, dropping blocks that are entirely zero.
    pub fn from_dense(
        dense: &DMatrix<f64>,
        row_offsets: Vec<usize>,
        col_offsets: Vec<usize>,
    ) -> Self {
        let mut m = Self::new(row_offsets, col_offsets);
        for i in 0..m.num_block_rows() {
            for j in 0..m.num_block_cols() {
                let (r0, c0) = (m.row_offsets[i], m.col_offsets[j]);
                let blk = dense
                    .view((r0, c0), (m.row_block_size(i), m.col_block_size(j)))
                    .into_owned();
                if blk.iter().any(|&v| v != 0.0) {
                    m.add_block(i, j, &blk);
                }
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        *self.row_offsets.last().unwrap()
    }

    pub fn ncols(&self) -> usize {
        *self.col_offsets.last().unwrap()
    }

    pub fn num_block_rows(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn num_block_cols(&self) -> usize {
        self.col_offsets.len() - 1
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_offsets(&self) -> &[usize] {
        &self.col_offsets
    }

    pub fn row_block_size(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn col_block_size(&self, j: usize) -> usize {
        self.col_offsets[j + 1] - self.col_offsets[j]
    }

    /// Stored blocks of block row `i`, sorted by block column.
    pub fn block_row(&self, i: usize) -> &[(usize, DMatrix<f64>)] {
        &self.rows[i]
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |(c, _)| *c)
            .ok()
            .map(|p| &row[p].1)
    }

    /// Adds `blk` to block `(i, j)`, creating it if absent.
    pub fn add_block(&mut self, i: usize, j: usize, blk: &DMatrix<f64>) {
        assert_eq!(
            blk.shape(),
            (self.row_block_size(i), self.col_block_size(j)),
            "block ({i},{j}) shape"
        );
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |(c, _)| *c) {
            Ok(p) => row[p].1 += blk,
            Err(p) => row.insert(p, (j, blk.clone())),
        }
    }

    /// Mutable access to block `(i, j)`, created as zero if absent.
    pub fn block_mut(&mut self, i: usize, j: usize) -> &mut DMatrix<f64> {
        let (r, c) = (self.row_block_size(i), self.col_block_size(j));
        let row = &mut self.rows[i];
        let p = match row.binary_search_by_key(&j, |(c, _)| *c) {
            Ok(p) => p,
            Err(p) => {
                row.insert(p, (j, DMatrix::zeros(r, c)));
                p
            }
        };
        &mut row[p].1
    }

    pub fn num_stored_blocks(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Number of stored scalar entries.
    pub fn nnz(&self) -> usize {
        self.rows.iter().flatten().map(|(_, b)| b.len()).sum()
    }

    /// Number of scalar rows with at least one stored block.
    pub fn nonzero_rows(&self) -> usize {
        (0..self.num_block_rows())
            .filter(|&i| !self.rows[i].is_empty())
            .map(|i| self.row_block_size(i))
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(|(_, b)| b.amax())
            .fold(0.0, f64::max)
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows()];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// `y = M x` without dimension checks beyond indexing.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            let r0 = self.row_offsets[i];
            let yi = &mut y[r0..self.row_offsets[i + 1]];
            yi.iter_mut().for_each(|v| *v = 0.0);
            for (j, blk) in row {
                let c0 = self.col_offsets[*j];
                for (c, col) in blk.column_iter().enumerate() {
                    let xc = x[c0 + c];
                    if xc != 0.0 {
                        for (v, a) in yi.iter_mut().zip(col.iter()) {
                            *v += a * xc;
                        }
                    }
                }
            }
        }
    }

    /// `y = Mᵀ x`.
    pub fn transpose_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.nrows(),
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.ncols()];
        for (i, row) in self.rows.iter().enumerate() {
            let xi = &x[self.row_offsets[i]..self.row_offsets[i + 1]];
            for (j, blk) in row {
                let c0 = self.col_offsets[*j];
                for (c, col) in blk.column_iter().enumerate() {
                    y[c0 + c] += col.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> BlockSparseMatrix {
        let mut t = BlockSparseMatrix::new(self.col_offsets.clone(), self.row_offsets.clone());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, blk) in row {
                t.rows[*j].push((i, blk.transpose()));
            }
        }
        t
    }

    /// `C = A B`.
    pub fn matmat(&self, other: &BlockSparseMatrix) -> Result<BlockSparseMatrix> {
        if self.col_offsets != other.row_offsets {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                got: other.nrows(),
            });
        }
        let mut c = BlockSparseMatrix::new(self.row_offsets.clone(), other.col_offsets.clone());
        let mut slot: Vec<usize> = vec![usize::MAX; other.num_block_cols()];
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc: Vec<(usize, DMatrix<f64>)> = Vec::new();
            for (k, a) in row {
                for (j, b) in &other.rows[*k] {
                    if slot[*j] == usize::MAX {
                        slot[*j] = acc.len();
                        acc.push((*j, DMatrix::zeros(a.nrows(), b.ncols())));
                    }
                    acc[slot[*j]].1.gemm(1.0, a, b, 1.0);
                }
            }
            for (j, _) in &acc {
                slot[*j] = usize::MAX;
            }
            acc.sort_by_key(|(j, _)| *j);
            c.rows[i] = acc;
        }
        Ok(c)
    }

    /// Galerkin product `Rᵀ M R`.
    pub fn galerkin(&self, r: &BlockSparseMatrix) -> Result<BlockSparseMatrix> {
        r.transpose().matmat(&self.matmat(r)?)
    }

    pub fn scale(&mut self, a: f64) {
        for (_, b) in self.rows.iter_mut().flatten() {
            *b *= a;
        }
    }

    /// `self + a * other` on identical layouts.
    pub fn add_scaled(&self, a: f64, other: &BlockSparseMatrix) -> Result<BlockSparseMatrix> {
        if self.row_offsets != other.row_offsets || self.col_offsets != other.col_offsets {
            return Err(Error::DimensionMismatch {
                expected: self.nrows(),
                got: other.nrows(),
            });
        }
        let mut out = self.clone();
        for (i, row) in other.rows.iter().enumerate() {
            for (j, b) in row {
                out.add_block(i, *j, &(b * a));
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, blk) in row {
                d.view_mut((self.row_offsets[i], self.col_offsets[*j]), blk.shape())
                    .copy_from(blk);
            }
        }
        d
    }

    /// Dense submatrix on scalar row and column index lists; `cols` must be ascending.
    pub fn extract(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        let mut out = DMatrix::zeros(rows.len(), cols.len());
        for (pr, &r) in rows.iter().enumerate() {
            let bi = self.row_offsets.partition_point(|&o| o <= r) - 1;
            let li = r - self.row_offsets[bi];
            for (bj, blk) in &self.rows[bi] {
                let (c0, c1) = (self.col_offsets[*bj], self.col_offsets[bj + 1]);
                let start = cols.partition_point(|&c| c < c0);
                for (pc, &c) in cols.iter().enumerate().skip(start) {
                    if c >= c1 {
                        break;
                    }
                    out[(pr, pc)] = blk[(li, c - c0)];
                }
            }
        }
        out
    }

    /// Principal block submatrix on a set of block rows/columns (listed
    /// ascending), renumbered locally.
    pub fn principal_submatrix(&self, blocks: &[usize]) -> BlockSparseMatrix {
        let mut offsets = vec![0usize; blocks.len() + 1];
        for (p, &b) in blocks.iter().enumerate() {
            offsets[p + 1] = offsets[p] + self.row_block_size(b);
        }
        let mut out = BlockSparseMatrix::new(offsets.clone(), offsets);
        for (p, &bi) in blocks.iter().enumerate() {
            for (bj, blk) in &self.rows[bi] {
                if let Ok(q) = blocks.binary_search(bj) {
                    out.rows[p].push((q, blk.clone()));
                }
            }
        }
        out
    }

    /// Principal dense submatrix on a set of block rows/columns (listed ascending).
    pub fn extract_blocks(&self, blocks: &[usize]) -> DMatrix<f64> {
        let mut local = vec![0usize; blocks.len() + 1];
        for (p, &b) in blocks.iter().enumerate() {
            local[p + 1] = local[p] + self.row_block_size(b);
        }
        let mut out = DMatrix::zeros(local[blocks.len()], local[blocks.len()]);
        for (p, &bi) in blocks.iter().enumerate() {
            for (bj, blk) in &self.rows[bi] {
                if let Ok(q) = blocks.binary_search(bj) {
                    out.view_mut((local[p], local[q]), blk.shape())
                        .copy_from(blk);
                }
            }
        }
        out
    }

    /// `max |M - Mᵀ|` over all entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for (j, blk) in row {
                let diff = match self.block(*j, i) {
                    Some(t) => (blk - t.transpose()).amax(),
                    None => blk.amax(),
                };
                worst = worst.max(diff);
            }
        }
        worst
    }

    /// Scalar `(row, col, value)` triplets of all stored entries, skipping exact zeros.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for (j, blk) in row {
                for c in 0..blk.ncols() {
                    for r in 0..blk.nrows() {
                        let v = blk[(r, c)];
                        if v != 0.0 {
                            out.push((self.row_offsets[i] + r, self.col_offsets[*j] + c, v));
                        }
                    }
                }
            }
        }
        out.sort_by_key(|&(r, c, _)| (r, c));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(
        rng: &mut impl Rng,
        offsets: &[usize],
        col_offsets: &[usize],
        fill: f64,
    ) -> BlockSparseMatrix {
        let mut m = BlockSparseMatrix::new(offsets.to_vec(), col_offsets.to_vec());
        for i in 0..offsets.len() - 1 {
            for j in 0..col_offsets.len() - 1 {
                if rng.random::<f64>() < fill {
                    let (r, c) = (m.row_block_size(i), m.col_block_size(j));
                    let blk = DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
                    m.add_block(i, j, &blk);
                }
            }
        }
        m
    }

    fn offsets(sizes: &[usize]) -> Vec<usize> {
        let mut o = vec![0];
        for s in sizes {
            o.push(o.last().unwrap() + s);
        }
        o
    }

    #[test]
    fn matvec_matches_dense() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let o = offsets(&[5, 3, 7, 10, 5, 4, 6, 10]);
        assert_eq!(*o.last().unwrap(), 50);
        let m = random(&mut rng, &o, &o, 0.4);
        let x: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = m.matvec(&x).unwrap();
        let yd = m.to_dense() * nalgebra::DVector::from_vec(x.clone());
        let err: f64 = y
            .iter()
            .zip(yd.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-13 * yd.norm());
        assert!(m.matvec(&x[..49]).is_err());
        let yt = m.transpose_matvec(&x).unwrap();
        let ytd = m.to_dense().transpose() * nalgebra::DVector::from_vec(x);
        assert!(yt
            .iter()
            .zip(ytd.iter())
            .all(|(a, b)| (a - b).abs() < 1e-13));
    }

    #[test]
    fn accumulating_insert_and_identity() {
        let o = offsets(&[2, 2]);
        let mut m = BlockSparseMatrix::identity(o.clone());
        m.add_block(0, 0, &DMatrix::identity(2, 2));
        assert_eq!(m.block(0, 0).unwrap()[(0, 0)], 2.0);
        assert_eq!(m.num_stored_blocks(), 2);
        let id = BlockSparseMatrix::identity(o);
        assert_eq!(
            id.matvec(&[1.0, 2.0, 3.0, 4.0]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn matmat_and_triple_product_match_dense() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let o = offsets(&[4, 6, 3, 5, 2]);
        let oc = offsets(&[3, 4, 2]);
        let a = random(&mut rng, &o, &o, 0.5);
        let r = random(&mut rng, &o, &oc, 0.6);
        let c = a.matmat(&r).unwrap();
        assert!((c.to_dense() - a.to_dense() * r.to_dense()).amax() < 1e-12);
        let g = a.galerkin(&r).unwrap();
        let gd = r.to_dense().transpose() * a.to_dense() * r.to_dense();
        assert!((g.to_dense() - &gd).amax() <= 1e-12 * gd.amax());
        let id = BlockSparseMatrix::identity(o.clone());
        assert_eq!(a.matmat(&id).unwrap().to_dense(), a.to_dense());
        assert!(r.matmat(&a).is_err());
    }

    #[test]
    fn extraction() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let o = offsets(&[3, 3, 3]);
        let a = random(&mut rng, &o, &o, 0.8);
        let d = a.to_dense();
        let idx = [0, 2, 4, 7, 8];
        let e = a.extract(&idx, &idx);
        for (p, &i) in idx.iter().enumerate() {
            for (q, &j) in idx.iter().enumerate() {
                assert_eq!(e[(p, q)], d[(i, j)]);
            }
        }
        let eb = a.extract_blocks(&[0, 2]);
        assert_eq!(eb.view((3, 0), (3, 3)), d.view((6, 0), (3, 3)));
        let back = BlockSparseMatrix::from_dense(&d, o.clone(), o);
        assert_eq!(back.to_dense(), d);
    }

    #[test]
    fn symmetry_measure() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let o = offsets(&[2, 3]);
        let a = random(&mut rng, &o, &o, 1.0);
        let s = a.add_scaled(1.0, &a.transpose()).unwrap();
        assert!(s.asymmetry() < 1e-15);
        assert!(a.asymmetry() > 0.0);
    }
}
