use serde::{Deserialize, Serialize};

use crate::smatch::DistanceMatrix;

/// One agglomeration. Leaves are clusters `0..n`; step `k` creates cluster
/// `n + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    /// Leaves under the new cluster.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MergeTree {
    pub leaves: usize,
    pub steps: Vec<MergeStep>,
}

impl MergeTree {
    /// Leaf indices under `cluster`, in ascending order.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        if cluster < self.leaves {
            return vec![cluster];
        }
        let step = &self.steps[cluster - self.leaves];
        let mut out = self.members(step.left);
        out.extend(self.members(step.right));
        out.sort_unstable();
        out
    }
}

/// Average-linkage agglomerative clustering. Among equally distant cluster
/// pairs the one with the smallest `(i, j)` cluster ids merges first.
pub fn upgma_order(d: &DistanceMatrix) -> MergeTree {
    let n = d.len();
    let mut tree = MergeTree { leaves: n, steps: Vec::with_capacity(n.saturating_sub(1)) };
    if n < 2 {
        return tree;
    }
    // dist[i][j] over cluster ids; rows grow as clusters are created
    let total = 2 * n - 1;
    let mut dist = vec![vec![f64::INFINITY; total]; total];
    for (i, row) in d.rows().iter().enumerate() {
        dist[i][..n].copy_from_slice(row);
    }
    let mut size = vec![1usize; total];
    let mut active: Vec<usize> = (0..n).collect();
    for k in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                let dij = dist[i][j];
                if best.is_none_or(|(bd, bi, bj)| dij < bd || (dij == bd && (i, j) < (bi, bj))) {
                    best = Some((dij, i, j));
                }
            }
        }
        let (dij, i, j) = best.expect("two active clusters");
        let new = n + k;
        size[new] = size[i] + size[j];
        for &m in &active {
            if m != i && m != j {
                let v = (size[i] as f64 * dist[i][m] + size[j] as f64 * dist[j][m]) / size[new] as f64;
                dist[new][m] = v;
                dist[m][new] = v;
            }
        }
        active.retain(|&m| m != i && m != j);
        active.push(new);
        tree.steps.push(MergeStep { left: i, right: j, distance: dij, size: size[new] });
    }
    tree
}
