//! Direct solver for the resistive-network systems.
//!
//! Node equations are reordered with reverse Cuthill-McKee to shrink the
//! envelope, then factored with a banded LU without pivoting. The matrices
//! here are (weakly) diagonally dominant M-matrix style Laplacians or
//! structurally symmetric device Jacobians, for which unpivoted LU is stable;
//! a vanishing pivot is reported as a singular-system fault.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Disjoint-set forest used to contract zero-resistance edges.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // attach the larger index under the smaller for stable representatives
            if ra < rb {
                self.parent[rb] = ra;
            } else {
                self.parent[ra] = rb;
            }
        }
    }
}

/// Reverse Cuthill-McKee ordering of an undirected graph given as adjacency lists.
///
/// Returns `perm` with `perm[new_index] = old_index`. Disconnected components are
/// ordered one after another.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.sort_by_key(|&v| degree[v]);

    for &start in &nodes {
        if visited[start] {
            continue;
        }
        let root = pseudo_peripheral(start, adjacency, &degree);
        // BFS from the root, neighbors in increasing-degree order
        let mut queue = std::collections::VecDeque::new();
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adjacency[v]
                .iter()
                .copied()
                .filter(|&u| !visited[u])
                .collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                if !visited[u] {
                    visited[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Find an approximately peripheral node by repeated BFS (George-Liu style).
fn pseudo_peripheral(start: usize, adjacency: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut root = start;
    let mut ecc = 0usize;
    for _ in 0..4 {
        let (far, far_ecc) = bfs_farthest(root, adjacency, degree);
        if far_ecc <= ecc {
            break;
        }
        ecc = far_ecc;
        root = far;
    }
    root
}

fn bfs_farthest(root: usize, adjacency: &[Vec<usize>], degree: &[usize]) -> (usize, usize) {
    let n = adjacency.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    dist[root] = 0;
    queue.push_back(root);
    let mut last_level: Vec<usize> = vec![root];
    let mut max_d = 0;
    while let Some(v) = queue.pop_front() {
        for &u in &adjacency[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                if dist[u] > max_d {
                    max_d = dist[u];
                    last_level.clear();
                }
                if dist[u] == max_d {
                    last_level.push(u);
                }
                queue.push_back(u);
            }
        }
    }
    let far = last_level
        .into_iter()
        .min_by_key(|&v| (degree[v], v))
        .unwrap_or(root);
    (far, max_d)
}

/// Square band matrix with equal lower/upper half-bandwidth, stored by rows.
///
/// Entry (i, j) with |i - j| <= bw lives at `data[i * stride + (j - i + bw)]`.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    bw: usize,
    stride: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let stride = 2 * bw + 1;
        Self {
            n,
            bw,
            stride,
            data: vec![T::zero(); n * stride],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i.abs_diff(j) <= self.bw);
        i * self.stride + (j + self.bw - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        if i.abs_diff(j) > self.bw {
            T::zero()
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn reset(&mut self) {
        self.data.fill(T::zero());
    }

    /// Factor in place into L (unit diagonal, stored below) and U (on and above
    /// the diagonal) without pivoting.
    pub fn factor(mut self, context: &'static str) -> Result<BandLu<T>> {
        let n = self.n;
        let bw = self.bw;
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if !pivot.is_finite() || pivot.abs() <= T::zero() {
                return Err(CoreError::Singular {
                    context,
                    row: k,
                    pivot: pivot.to_f64().unwrap_or(f64::NAN),
                });
            }
            let i_end = (k + bw).min(n - 1);
            for i in (k + 1)..=i_end {
                let ik = self.idx(i, k);
                let lik = self.data[ik] / pivot;
                self.data[ik] = lik;
                if lik != T::zero() {
                    let j_end = (k + bw).min(n - 1);
                    // row_i[j] -= lik * row_k[j] over the shared band
                    let base_i = self.idx(i, k + 1);
                    let base_k = self.idx(k, k + 1);
                    let len = j_end - k;
                    for d in 0..len {
                        let ukj = self.data[base_k + d];
                        if ukj != T::zero() {
                            self.data[base_i + d] -= lik * ukj;
                        }
                    }
                }
            }
        }
        Ok(BandLu { mat: self })
    }
}

/// Factored banded system ready for repeated back-solves.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    mat: BandMatrix<T>,
}

impl<T: Scalar> BandLu<T> {
    pub fn n(&self) -> usize {
        self.mat.n
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.mat.n;
        let bw = self.mat.bw;
        debug_assert_eq!(b.len(), n);
        // forward: L y = b
        for i in 0..n {
            let j_start = i.saturating_sub(bw);
            let mut acc = b[i];
            for j in j_start..i {
                let lij = self.mat.data[self.mat.idx(i, j)];
                if lij != T::zero() {
                    acc -= lij * b[j];
                }
            }
            b[i] = acc;
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let j_end = (i + bw).min(n - 1);
            let mut acc = b[i];
            for j in (i + 1)..=j_end {
                let uij = self.mat.data[self.mat.idx(i, j)];
                if uij != T::zero() {
                    acc -= uij * b[j];
                }
            }
            b[i] = acc / self.mat.data[self.mat.idx(i, i)];
        }
    }

    /// Solve the transposed system `A^T x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [T]) {
        let n = self.mat.n;
        let bw = self.mat.bw;
        debug_assert_eq!(b.len(), n);
        // forward: U^T y = b (U^T is lower triangular)
        for i in 0..n {
            let j_start = i.saturating_sub(bw);
            let mut acc = b[i];
            for j in j_start..i {
                let uji = self.mat.data[self.mat.idx(j, i)];
                if uji != T::zero() {
                    acc -= uji * b[j];
                }
            }
            b[i] = acc / self.mat.data[self.mat.idx(i, i)];
        }
        // backward: L^T x = y (unit diagonal)
        for i in (0..n).rev() {
            let j_end = (i + bw).min(n - 1);
            let mut acc = b[i];
            for j in (i + 1)..=j_end {
                let lji = self.mat.data[self.mat.idx(j, i)];
                if lji != T::zero() {
                    acc -= lji * b[j];
                }
            }
            b[i] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(&aij, &xj)| aij * xj).sum())
            .collect()
    }

    #[test]
    fn union_find_merges_chains() {
        let mut uf = UnionFind::new(5);
        uf.union(0, 1);
        uf.union(1, 2);
        assert_eq!(uf.find(2), uf.find(0));
        assert_ne!(uf.find(3), uf.find(0));
    }

    #[test]
    fn rcm_reduces_bandwidth_of_a_path_graph() {
        // path 0-3-1-4-2 given with scrambled labels
        let adj = vec![vec![3], vec![3, 4], vec![4], vec![0, 1], vec![1, 2]];
        let perm = reverse_cuthill_mckee(&adj);
        let mut pos = vec![0; 5];
        for (new, &old) in perm.iter().enumerate() {
            pos[old] = new;
        }
        let mut bw = 0usize;
        for (v, nbrs) in adj.iter().enumerate() {
            for &u in nbrs {
                bw = bw.max(pos[v].abs_diff(pos[u]));
            }
        }
        assert_eq!(bw, 1);
    }

    #[test]
    fn band_lu_matches_dense_solution() {
        let n = 12;
        let bw = 3;
        // random-ish diagonally dominant asymmetric band matrix
        let mut dense = vec![vec![0.0; n]; n];
        let mut band = BandMatrix::zeros(n, bw);
        let mut seed = 0x12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        for i in 0..n {
            for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
                if i != j {
                    let v = next();
                    dense[i][j] = v;
                    band.add(i, j, v);
                }
            }
            let row_sum: f64 = dense[i].iter().map(|v| v.abs()).sum();
            let d = row_sum + 1.0;
            dense[i][i] = d;
            band.add(i, i, d);
        }
        let lu = band.factor("test").unwrap();

        let x_true: Vec<f64> = (0..n).map(|i| (i as f64) * 0.25 - 1.0).collect();
        let mut b = dense_matvec(&dense, &x_true);
        lu.solve_in_place(&mut b);
        for (xi, ti) in b.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12, "{xi} vs {ti}");
        }

        // transpose solve: A^T x = b
        let mut bt = vec![0.0; n];
        for (j, btj) in bt.iter_mut().enumerate() {
            *btj = (0..n).map(|i| dense[i][j] * x_true[i]).sum();
        }
        lu.solve_transpose_in_place(&mut bt);
        for (xi, ti) in bt.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12, "{xi} vs {ti}");
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let band = BandMatrix::<f64>::zeros(3, 1);
        let err = band.factor("test").unwrap_err();
        match err {
            CoreError::Singular { row, .. } => assert_eq!(row, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
