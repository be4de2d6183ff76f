//! Fill-reducing elimination ordering for the sparse symmetric factorization.

use std::collections::BTreeSet;

use super::sparse::SparseSymmetric;

/// Minimum-degree elimination ordering on the off-diagonal sparsity graph.
///
/// Returns `perm` with `perm[k]` = the original index eliminated at step k;
/// ties break on the smaller index, so the ordering is deterministic.
pub fn min_degree_order(matrix: &SparseSymmetric) -> Vec<usize> {
    let n = matrix.dim();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, j, _) in matrix.iter() {
        if i != j {
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut perm = Vec::with_capacity(n);
    while let Some(&next) = alive
        .iter()
        .min_by_key(|&&v| (adj[v].len(), v))
    {
        perm.push(next);
        alive.remove(&next);
        let neighbors: Vec<usize> = adj[next].iter().copied().collect();
        // Eliminating a vertex joins its neighbors into a clique.
        for &u in &neighbors {
            adj[u].remove(&next);
            for &v in &neighbors {
                if v != u {
                    adj[u].insert(v);
                }
            }
        }
        adj[next].clear();
    }
    perm
}
