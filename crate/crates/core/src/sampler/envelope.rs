//! Envelope (profile) sparse Cholesky factorization.
//!
//! Row `i` of the lower factor is stored contiguously from its first
//! structurally nonzero column up to the diagonal. Fill never leaves the
//! envelope of the (permuted) matrix, so the symbolic phase reduces to
//! choosing an ordering and computing row starts; the numeric phase runs
//! row-oriented dot products over contiguous slices.
//!
//! The ordering is picked once, as the candidate with the smallest envelope
//! among reverse Cuthill–McKee and axis-permuted lexicographic orderings of
//! the tensor grid.

use std::collections::VecDeque;

use crate::tensor;

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv[old] = new`
    inv: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    values: Vec<f64>,
}

/// Failed pivot during numeric factorization (permuted row index).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub row: usize,
    pub pivot: f64,
}

fn envelope_size(n: usize, inv: &[usize], pattern: &[(usize, usize)]) -> usize {
    let mut first: Vec<usize> = (0..n).collect();
    for &(a, b) in pattern {
        let (i, j) = (inv[a].max(inv[b]), inv[a].min(inv[b]));
        first[i] = first[i].min(j);
    }
    first.iter().enumerate().map(|(i, f)| i - f + 1).sum()
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// Reverse Cuthill–McKee ordering, started from a pseudo-peripheral node of
/// every connected component.
pub fn reverse_cuthill_mckee(n: usize, pattern: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in pattern {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let bfs_levels = |start: usize, mark: &mut Vec<usize>, stamp: usize| -> (usize, usize) {
        // returns (last node of the deepest level with minimum degree, depth)
        let mut q = VecDeque::from([(start, 0usize)]);
        mark[start] = stamp;
        let (mut best, mut depth) = (start, 0);
        while let Some((v, d)) = q.pop_front() {
            if d > depth || (d == depth && degree[v] < degree[best]) {
                best = v;
                depth = d;
            }
            for &w in &adj[v] {
                if mark[w] != stamp {
                    mark[w] = stamp;
                    q.push_back((w, d + 1));
                }
            }
        }
        (best, depth)
    };

    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let mut mark = vec![usize::MAX; n];
    let mut stamp = 0;
    for seed in 0..n {
        if placed[seed] {
            continue;
        }
        // pseudo-peripheral start: repeat BFS from the far end until depth stops growing
        let mut start = seed;
        let (mut far, mut depth) = bfs_levels(start, &mut mark, stamp);
        stamp += 1;
        for _ in 0..8 {
            let (f2, d2) = bfs_levels(far, &mut mark, stamp);
            stamp += 1;
            if d2 <= depth {
                break;
            }
            start = far;
            far = f2;
            depth = d2;
        }
        let begin = order.len();
        placed[start] = true;
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !placed[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                placed[w] = true;
                order.push(w);
            }
        }
    }
    order.reverse();
    order
}

/// Lexicographic tensor orderings with the axes permuted so that `axes[0]`
/// varies slowest.
fn axis_ordering(dims: &[usize], axes: &[usize]) -> Vec<usize> {
    let n: usize = dims.iter().product();
    let strides = tensor::strides(dims);
    let pdims: Vec<usize> = axes.iter().map(|&a| dims[a]).collect();
    let mut dg = vec![0usize; dims.len()];
    (0..n)
        .map(|new| {
            tensor::digits(new, &pdims, &mut dg);
            axes.iter().zip(&dg).map(|(&a, &d)| d * strides[a]).sum()
        })
        .collect()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(k - 1) {
        for pos in 0..=rest.len() {
            let mut v = rest.clone();
            v.insert(pos, k - 1);
            out.push(v);
        }
    }
    out
}

impl EnvelopeCholesky {
    /// Symbolic analysis for an `n × n` symmetric matrix whose structural
    /// nonzeros (either triangle) are `pattern`. `grid_dims`, when given,
    /// adds axis-permuted tensor orderings to the candidates.
    pub fn analyze(n: usize, pattern: &[(usize, usize)], grid_dims: Option<&[usize]>) -> Self {
        let mut candidates: Vec<Vec<usize>> = vec![(0..n).collect()];
        if let Some(dims) = grid_dims {
            debug_assert_eq!(dims.iter().product::<usize>(), n);
            let axes = if dims.len() <= 5 {
                permutations(dims.len())
            } else {
                let mut a: Vec<usize> = (0..dims.len()).collect();
                a.sort_by_key(|&j| std::cmp::Reverse(dims[j]));
                vec![a]
            };
            candidates.extend(axes.iter().map(|ax| axis_ordering(dims, ax)));
        }
        candidates.push(reverse_cuthill_mckee(n, pattern));
        let perm = candidates
            .into_iter()
            .map(|p| {
                let size = envelope_size(n, &invert(&p), pattern);
                (size, p)
            })
            .min_by_key(|(size, _)| *size)
            .map(|(_, p)| p)
            .unwrap();
        Self::with_ordering(n, pattern, perm)
    }

    /// Symbolic analysis with a caller-chosen ordering (`perm[new] = old`).
    pub fn with_ordering(n: usize, pattern: &[(usize, usize)], perm: Vec<usize>) -> Self {
        assert_eq!(perm.len(), n);
        let inv = invert(&perm);
        let mut first: Vec<usize> = (0..n).collect();
        for &(a, b) in pattern {
            let (i, j) = (inv[a].max(inv[b]), inv[a].min(inv[b]));
            first[i] = first[i].min(j);
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first[i] + 1));
        }
        let len = row_start[n];
        EnvelopeCholesky {
            n,
            perm,
            inv,
            first,
            row_start,
            values: vec![0.0; len],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries of the lower factor.
    pub fn envelope_len(&self) -> usize {
        self.values.len()
    }

    /// Storage slot of entry `(a, b)` in original indices; `None` if outside
    /// the envelope.
    pub fn slot(&self, a: usize, b: usize) -> Option<usize> {
        let (i, j) = (self.inv[a].max(self.inv[b]), self.inv[a].min(self.inv[b]));
        (j >= self.first[i]).then(|| self.row_start[i] + (j - self.first[i]))
    }

    /// Mutable storage; fill with the lower triangle of the matrix before
    /// calling [`Self::factorize`].
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// In-place numeric factorization `P A Pᵀ = L Lᵀ`.
    pub fn factorize(&mut self) -> Result<(), NotPositiveDefinite> {
        for i in 0..self.n {
            let fi = self.first[i];
            let (done, rest) = self.values.split_at_mut(self.row_start[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = self.first[j];
                let s = fi.max(fj);
                let row_j = &done[self.row_start[j]..self.row_start[j + 1]];
                let li = &row_i[s - fi..j - fi];
                let lj = &row_j[s - fj..j - fj];
                let dot: f64 = li.iter().zip(lj).map(|(x, y)| x * y).sum();
                let diag_j = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - dot) / diag_j;
            }
            let sq: f64 = row_i[..i - fi].iter().map(|x| x * x).sum();
            let pivot = row_i[i - fi] - sq;
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(NotPositiveDefinite { row: i, pivot });
            }
            row_i[i - fi] = pivot.sqrt();
        }
        Ok(())
    }

    /// `x_perm[new] = x[perm[new]]`
    pub fn permute(&self, x: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&old| x[old]).collect()
    }

    pub fn unpermute(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    /// Solves `L x = c` in place (permuted space).
    pub fn solve_lower(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.values[self.row_start[i]..self.row_start[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&x[fi..i]).map(|(l, v)| l * v).sum();
            x[i] = (x[i] - dot) / row[i - fi];
        }
    }

    /// Solves `Lᵀ x = c` in place (permuted space).
    pub fn solve_upper(&self, x: &mut [f64]) {
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.row_start[i]..self.row_start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (v, l) in x[fi..i].iter_mut().zip(&row[..i - fi]) {
                *v -= l * xi;
            }
        }
    }

    /// Solves `A x = c` in original indices using the current factor.
    pub fn solve(&self, c: &[f64]) -> Vec<f64> {
        let mut x = self.permute(c);
        self.solve_lower(&mut x);
        self.solve_upper(&mut x);
        self.unpermute(&x)
    }

    /// `Σ log L_ii = ½ log det A`.
    pub fn half_log_det(&self) -> f64 {
        (0..self.n)
            .map(|i| self.values[self.row_start[i + 1] - 1].ln())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn grid_laplacian(dims: &[usize]) -> (usize, Vec<(usize, usize)>, DMatrix<f64>) {
        let n: usize = dims.iter().product();
        let s = tensor::strides(dims);
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut dg = vec![0; dims.len()];
        for a in 0..n {
            tensor::digits(a, dims, &mut dg);
            m[(a, a)] += 0.5;
            for j in 0..dims.len() {
                if dg[j] + 1 < dims[j] {
                    let b = a + s[j];
                    m[(a, a)] += 1.0;
                    m[(b, b)] += 1.0;
                    m[(a, b)] -= 1.0;
                    m[(b, a)] -= 1.0;
                }
            }
        }
        let pattern = (0..n)
            .flat_map(|a| (a..n).map(move |b| (a, b)))
            .filter(|&(a, b)| m[(a, b)] != 0.0)
            .collect();
        (n, pattern, m)
    }

    fn load(ch: &mut EnvelopeCholesky, pattern: &[(usize, usize)], m: &DMatrix<f64>) {
        ch.values_mut().fill(0.0);
        for &(a, b) in pattern {
            let k = ch.slot(a, b).unwrap();
            ch.values_mut()[k] = m[(a, b)];
        }
    }

    #[test]
    fn matches_dense_solve_and_log_det() {
        let (n, pattern, m) = grid_laplacian(&[4, 3, 5]);
        let mut ch = EnvelopeCholesky::analyze(n, &pattern, Some(&[4, 3, 5]));
        load(&mut ch, &pattern, &m);
        ch.factorize().unwrap();
        let c: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let x = ch.solve(&c);
        let want = m.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(c));
        for (a, b) in x.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let ld = m.cholesky().unwrap().l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        assert!((ch.half_log_det() - ld).abs() < 1e-10);
    }

    #[test]
    fn half_solve_gives_factor_covariance() {
        // L⁻ᵀ applied to unit vectors gives columns whose Gram matrix is A⁻¹ (permuted back)
        let (n, pattern, m) = grid_laplacian(&[3, 4]);
        let mut ch = EnvelopeCholesky::analyze(n, &pattern, None);
        load(&mut ch, &pattern, &m);
        ch.factorize().unwrap();
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            ch.solve_upper(&mut e);
            let col = nalgebra::DVector::from_vec(ch.unpermute(&e));
            cov += &col * col.transpose();
        }
        let inv = m.try_inverse().unwrap();
        assert!((cov - inv).amax() < 1e-10);
    }

    #[test]
    fn detects_indefinite() {
        let pattern = vec![(0, 0), (0, 1), (1, 1)];
        let mut ch = EnvelopeCholesky::analyze(2, &pattern, None);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        load(&mut ch, &pattern, &m);
        assert!(ch.factorize().is_err());
    }

    #[test]
    fn ordering_prefers_largest_axis_slowest() {
        let dims = [3, 3, 12];
        let (n, pattern, _) = grid_laplacian(&dims);
        let natural = EnvelopeCholesky::with_ordering(n, &pattern, (0..n).collect());
        let chosen = EnvelopeCholesky::analyze(n, &pattern, Some(&dims));
        assert!(chosen.envelope_len() < natural.envelope_len());
    }

    #[test]
    fn rcm_is_a_permutation() {
        let (n, pattern, _) = grid_laplacian(&[5, 4]);
        let mut p = reverse_cuthill_mckee(n, &pattern);
        p.sort_unstable();
        assert_eq!(p, (0..n).collect::<Vec<_>>());
    }
}
