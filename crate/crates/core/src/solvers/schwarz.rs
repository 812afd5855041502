//! Overlapping additive Schwarz with p-multigrid block solves and damping by
//! the number of blocks containing each unknown.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::Result;
use crate::linalg::BlockSparseMatrix;
use crate::solvers::{Pmg, SmootherInput};
use crate::xdg::XdgIndexMap;

/// Cover of the block graph by overlapping subdomains.
#[derive(Debug, Clone, PartialEq)]
pub struct SchwarzPartition {
    /// Non-overlapping parts, each sorted.
    pub cores: Vec<Vec<usize>>,
    /// Parts extended by one layer of graph neighbours, each sorted.
    pub blocks: Vec<Vec<usize>>,
    /// Number of extended parts containing each graph node.
    pub membership: Vec<usize>,
}

/// Block adjacency of a square block matrix (off-diagonal stored blocks).
pub fn block_graph(m: &BlockSparseMatrix) -> Vec<Vec<usize>> {
    let n = m.num_block_rows();
    let mut adj = vec![Vec::new(); n];
    for (i, nbrs) in adj.iter_mut().enumerate() {
        for (j, _) in m.block_row(i) {
            if *j != i {
                nbrs.push(*j);
            }
        }
    }
    // symmetrize in case the pattern is not
    for i in 0..n {
        for p in 0..adj[i].len() {
            let j = adj[i][p];
            if adj[j].binary_search(&i).is_err() {
                let pos = adj[j].partition_point(|&x| x < i);
                adj[j].insert(pos, i);
            }
        }
    }
    adj
}

impl SchwarzPartition {
    /// Greedy graph growing: each part is seeded at the lowest-index free
    /// node and repeatedly absorbs the lowest-index free node on its frontier
    /// until the next one would push it past `target_dofs`. Parts under half
    /// the target are merged into their smallest neighbouring part, then every
    /// part is extended by its neighbours.
    pub fn build(adjacency: &[Vec<usize>], node_dofs: &[usize], target_dofs: usize) -> Self {
        let n = adjacency.len();
        let mut part = vec![usize::MAX; n];
        let mut sizes: Vec<usize> = Vec::new();
        let mut next_seed = 0;
        let mut queued = vec![usize::MAX; n];
        loop {
            while next_seed < n && part[next_seed] != usize::MAX {
                next_seed += 1;
            }
            if next_seed == n {
                break;
            }
            let id = sizes.len();
            let mut size = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse(next_seed));
            queued[next_seed] = id;
            while let Some(Reverse(v)) = heap.pop() {
                if part[v] != usize::MAX {
                    continue;
                }
                if size > 0 && size + node_dofs[v] > target_dofs {
                    break;
                }
                part[v] = id;
                size += node_dofs[v];
                for &u in &adjacency[v] {
                    if part[u] == usize::MAX && queued[u] != id {
                        queued[u] = id;
                        heap.push(Reverse(u));
                    }
                }
            }
            sizes.push(size);
        }

        // merge undersized parts
        let mut alias: Vec<usize> = (0..sizes.len()).collect();
        fn find(alias: &mut [usize], mut p: usize) -> usize {
            while alias[p] != p {
                alias[p] = alias[alias[p]];
                p = alias[p];
            }
            p
        }
        if sizes.len() > 1 {
            for p in 0..sizes.len() {
                let root = find(&mut alias, p);
                if 2 * sizes[root] >= target_dofs {
                    continue;
                }
                let mut best: Option<usize> = None;
                for v in 0..n {
                    if find(&mut alias, part[v]) != root {
                        continue;
                    }
                    for &u in &adjacency[v] {
                        let q = find(&mut alias, part[u]);
                        if q != root && best.is_none_or(|b| (sizes[q], q) < (sizes[b], b)) {
                            best = Some(q);
                        }
                    }
                }
                if let Some(q) = best {
                    alias[root] = q;
                    sizes[q] += sizes[root];
                }
            }
        }
        let mut renumber = vec![usize::MAX; sizes.len()];
        let mut cores: Vec<Vec<usize>> = Vec::new();
        for v in 0..n {
            let root = find(&mut alias, part[v]);
            if renumber[root] == usize::MAX {
                renumber[root] = cores.len();
                cores.push(Vec::new());
            }
            cores[renumber[root]].push(v);
        }

        let mut membership = vec![0; n];
        let mut mark = vec![usize::MAX; n];
        let blocks: Vec<Vec<usize>> = cores
            .iter()
            .enumerate()
            .map(|(p, core)| {
                let mut ext = Vec::new();
                for &v in core {
                    for &u in std::iter::once(&v).chain(&adjacency[v]) {
                        if mark[u] != p {
                            mark[u] = p;
                            ext.push(u);
                        }
                    }
                }
                ext.sort_unstable();
                for &u in &ext {
                    membership[u] += 1;
                }
                ext
            })
            .collect();
        SchwarzPartition {
            cores,
            blocks,
            membership,
        }
    }

    /// Partition of the block graph of `m`, weighted by the block sizes of `map`.
    pub fn from_matrix(m: &BlockSparseMatrix, map: &XdgIndexMap, target_dofs: usize) -> Self {
        let dofs = vec![map.block_size(); map.num_blocks()];
        Self::build(&block_graph(m), &dofs, target_dofs)
    }
}

/// Additive Schwarz smoother: `z = D⁻¹ Σ_i E_i PMG_i(E_iᵀ r)` with `D` the membership counts.
#[derive(Debug, Clone)]
pub struct Schwarz {
    partition: SchwarzPartition,
    solvers: Vec<Pmg>,
    damping: Vec<f64>,
}

impl Schwarz {
    pub fn new(
        m: &BlockSparseMatrix,
        map: &XdgIndexMap,
        partition: SchwarzPartition,
        k_lo: &[usize],
        input: SmootherInput,
    ) -> Result<Self> {
        let solvers = partition
            .blocks
            .iter()
            .map(|blocks| Pmg::new(m, map, blocks, k_lo, input))
            .collect::<Result<Vec<_>>>()?;
        let mut damping = vec![1.0; map.len()];
        for b in 0..map.num_blocks() {
            for i in map.block_range(b) {
                damping[i] = partition.membership[b] as f64;
            }
        }
        Ok(Schwarz {
            partition,
            solvers,
            damping,
        })
    }

    pub fn partition(&self) -> &SchwarzPartition {
        &self.partition
    }

    /// Sum of the block corrections before damping.
    pub fn apply_undamped(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut z = vec![0.0; r.len()];
        for s in &self.solvers {
            let local: Vec<f64> = s.dofs().iter().map(|&i| r[i]).collect();
            for (&i, v) in s.dofs().iter().zip(s.apply_local(&local)?) {
                z[i] += v;
            }
        }
        Ok(z)
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.apply_undamped(r)?;
        for (zi, d) in z.iter_mut().zip(&self.damping) {
            *zi /= d;
        }
        Ok(z)
    }
}
