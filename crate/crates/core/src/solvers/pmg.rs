//! Two-stage p-multigrid block solver: one direct solve on the low-order
//! modes of all cells in the block set, then independent high-order solves
//! per background cell on the updated residual.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{BlockSparseMatrix, DirectFactorization};
use crate::solvers::SmootherInput;
use crate::xdg::XdgIndexMap;

#[derive(Debug, Clone)]
pub struct Pmg {
    /// Global scalar indices covered, ascending.
    dofs: Vec<usize>,
    /// Principal submatrix on `dofs`.
    local: BlockSparseMatrix,
    lo: Vec<usize>,
    lo_factor: Option<DirectFactorization>,
    hi: Vec<(Vec<usize>, DirectFactorization)>,
    high_order_input: SmootherInput,
}

fn name_block(map: &XdgIndexMap, b: usize) -> String {
    let key = map.block(b);
    format!("cell {} species {:?}", key.cell, key.species)
}

impl Pmg {
    /// Factors the low-order system on `blocks` (ascending block ids of `map`)
    /// and the high-order diagonal block of each of them.
    pub fn new(
        m: &BlockSparseMatrix,
        map: &XdgIndexMap,
        blocks: &[usize],
        k_lo: &[usize],
        high_order_input: SmootherInput,
    ) -> Result<Self> {
        if m.nrows() != map.len() || m.ncols() != map.len() {
            return Err(Error::DimensionMismatch {
                expected: map.len(),
                got: m.nrows(),
            });
        }
        if k_lo.len() != map.degrees().len() || k_lo.iter().zip(map.degrees()).any(|(lo, k)| lo > k)
        {
            return Err(Error::InvalidConfig(format!(
                "k_lo {k_lo:?} incompatible with degrees {:?}",
                map.degrees()
            )));
        }
        debug_assert!(blocks.windows(2).all(|w| w[0] < w[1]));
        let local = m.principal_submatrix(blocks);
        let dofs: Vec<usize> = blocks.iter().flat_map(|&b| map.block_range(b)).collect();
        let bs = map.block_size();
        let lo_local = map.local_low_order(k_lo);
        let hi_local = map.local_high_order(k_lo);

        let lo: Vec<usize> = (0..blocks.len())
            .flat_map(|p| lo_local.iter().map(move |&i| p * bs + i))
            .collect();
        let lo_factor = if lo.is_empty() {
            None
        } else {
            let mut pos = vec![usize::MAX; dofs.len()];
            for (q, &i) in lo.iter().enumerate() {
                pos[i] = q;
            }
            let entries: Vec<(usize, usize, f64)> = local
                .triplets()
                .into_iter()
                .filter_map(|(r, c, v)| {
                    let (pr, pc) = (pos[r], pos[c]);
                    (pr != usize::MAX && pc != usize::MAX).then_some((pr, pc, v))
                })
                .collect();
            Some(
                DirectFactorization::from_triplets(lo.len(), &entries).map_err(|e| {
                    Error::SingularSystem(format!(
                        "low-order system of {} blocks: {e}",
                        blocks.len()
                    ))
                })?,
            )
        };

        let mut hi = Vec::new();
        if !hi_local.is_empty() {
            // all species of one background cell share a high-order solve
            let mut start = 0;
            while start < blocks.len() {
                let cell = map.block(blocks[start]).cell;
                let mut end = start + 1;
                while end < blocks.len() && map.block(blocks[end]).cell == cell {
                    end += 1;
                }
                let nh = hi_local.len();
                let mut sub = DMatrix::zeros((end - start) * nh, (end - start) * nh);
                for p in start..end {
                    for q in start..end {
                        let Some(blk) = local.block(p, q) else {
                            if p == q {
                                return Err(Error::SingularSystem(format!(
                                    "no diagonal block for {}",
                                    name_block(map, blocks[p])
                                )));
                            }
                            continue;
                        };
                        let s = blk.select_rows(&hi_local).select_columns(&hi_local);
                        sub.view_mut(((p - start) * nh, (q - start) * nh), (nh, nh))
                            .copy_from(&s);
                    }
                }
                let f = DirectFactorization::new(sub).map_err(|e| {
                    Error::SingularSystem(format!("high-order block of cell {cell}: {e}"))
                })?;
                let idx = (start..end)
                    .flat_map(|p| hi_local.iter().map(move |&i| p * bs + i))
                    .collect();
                hi.push((idx, f));
                start = end;
            }
        }
        Ok(Pmg {
            dofs,
            local,
            lo,
            lo_factor,
            hi,
            high_order_input,
        })
    }

    /// Block solver over every block of `map`.
    pub fn global(
        m: &BlockSparseMatrix,
        map: &XdgIndexMap,
        k_lo: &[usize],
        input: SmootherInput,
    ) -> Result<Self> {
        let blocks: Vec<usize> = (0..map.num_blocks()).collect();
        Self::new(m, map, &blocks, k_lo, input)
    }

    /// Global indices covered by this solver.
    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    /// Applies the solver to a right-hand side given on [`Pmg::dofs`].
    pub fn apply_local(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dofs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dofs.len(),
                got: b.len(),
            });
        }
        let mut x = vec![0.0; b.len()];
        if let Some(f) = &self.lo_factor {
            let b_lo: Vec<f64> = self.lo.iter().map(|&i| b[i]).collect();
            for (&i, v) in self.lo.iter().zip(f.apply(&b_lo)?) {
                x[i] = v;
            }
        }
        if self.hi.is_empty() {
            return Ok(x);
        }
        let r = match self.high_order_input {
            SmootherInput::Residual => {
                let mx = self.local.matvec(&x)?;
                b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect()
            }
            SmootherInput::Rhs => b.to_vec(),
        };
        for (idx, f) in &self.hi {
            let rhs: Vec<f64> = idx.iter().map(|&i| r[i]).collect();
            for (&i, v) in idx.iter().zip(f.apply(&rhs)?) {
                x[i] += v;
            }
        }
        Ok(x)
    }

    /// Applies the solver to a global vector; the result vanishes outside [`Pmg::dofs`].
    pub fn apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.local_len_hint(b.len())?;
        let local: Vec<f64> = self.dofs.iter().map(|&i| b[i]).collect();
        let xl = self.apply_local(&local)?;
        let mut x = vec![0.0; n];
        for (&i, v) in self.dofs.iter().zip(xl) {
            x[i] = v;
        }
        Ok(x)
    }

    fn local_len_hint(&self, n: usize) -> Result<usize> {
        match self.dofs.last() {
            Some(&last) if last >= n => Err(Error::DimensionMismatch {
                expected: last + 1,
                got: n,
            }),
            _ => Ok(n),
        }
    }
}
