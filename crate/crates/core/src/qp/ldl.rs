//! Envelope (skyline) LDLᵀ factorization for symmetric quasi-definite systems.
//!
//! The sparsity pattern is fixed up front, reordered with reverse Cuthill-McKee
//! so the lower envelope stays narrow, and then refactored numerically as many
//! times as needed. No pivoting is performed; each pivot is checked against an
//! expected sign (`+1` for primal rows, `-1` for dual rows) and bumped to a tiny
//! value of the right sign when it collapses. [`EnvelopeLdl::solve_refined`]
//! removes the effect of those bumps and of any static dual regularization by
//! iterative refinement against the unregularized stored matrix.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub(crate) struct EnvelopeLdl {
    n: usize,
    /// new index -> original index
    perm: Vec<usize>,
    /// original index -> new index
    iperm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    /// Stored matrix (lower envelope, permuted), without regularization.
    a: Vec<f64>,
    /// Factor: strictly-lower entries of L in `l`, pivots in `d`.
    l: Vec<f64>,
    d: Vec<f64>,
    /// Diagonal shift applied at factorization time (original indexing).
    shift: Vec<f64>,
    pub(crate) bumped_pivots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RefineReport {
    pub residual: f64,
    pub iterations: usize,
}

impl EnvelopeLdl {
    /// Symbolic setup from the (off-diagonal) pattern given as unordered pairs in
    /// original indices. The diagonal is always part of the pattern.
    pub(crate) fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in pairs {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old, nbrs) in adj.iter().enumerate() {
            let i = iperm[old];
            for &nb in nbrs {
                let j = iperm[nb];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut row_start = vec![0; n + 1];
        for i in 0..n {
            row_start[i + 1] = row_start[i] + (i - first[i]) + 1;
        }
        let len = row_start[n];
        Self {
            n,
            perm,
            iperm,
            first,
            row_start,
            a: vec![0.0; len],
            l: vec![0.0; len],
            d: vec![0.0; n],
            shift: vec![0.0; n],
            bumped_pivots: 0,
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.n
    }

    #[cfg(test)]
    pub(crate) fn envelope_size(&self) -> usize {
        self.row_start[self.n]
    }

    pub(crate) fn clear(&mut self) {
        self.a.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        let (pi, pj) = (self.iperm[i], self.iperm[j]);
        let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        debug_assert!(c >= self.first[r], "entry ({i}, {j}) outside symbolic pattern");
        self.row_start[r] + (c - self.first[r])
    }

    /// Adds `v` to the symmetric pair `(i, j)`/`(j, i)` (or the diagonal when
    /// `i == j`). Call once per unordered pair.
    #[inline]
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j);
        self.a[k] += v;
    }

    /// Numeric factorization of `A + diag(shift)`.
    ///
    /// `signs[i]` is the expected pivot sign. With `bump = Some(eps)`, pivots
    /// with the wrong sign or magnitude below `eps` are replaced by `sign * eps`;
    /// with `bump = None` a bad pivot aborts and its (original) index is returned.
    pub(crate) fn factor(&mut self, shift: &[f64], signs: &[f64], bump: Option<f64>) -> Result<(), usize> {
        let n = self.n;
        self.shift.copy_from_slice(shift);
        self.bumped_pivots = 0;
        let mut w = vec![0.0; n];
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            for j in fi..i {
                let fj = self.first[j];
                let rj = self.row_start[j];
                let k0 = fi.max(fj);
                let mut s = self.a[ri + (j - fi)];
                for k in k0..j {
                    s -= self.l[rj + (k - fj)] * w[k];
                }
                w[j] = s;
                self.l[ri + (j - fi)] = s / self.d[j];
            }
            let mut di = self.a[ri + (i - fi)] + self.shift[self.perm[i]];
            for j in fi..i {
                di -= self.l[ri + (j - fi)] * w[j];
                w[j] = 0.0;
            }
            let sign = signs[self.perm[i]];
            if !(di * sign > bump.unwrap_or(0.0)) {
                match bump {
                    Some(eps) => {
                        di = sign * eps;
                        self.bumped_pivots += 1;
                    }
                    None => return Err(self.perm[i]),
                }
            }
            self.d[i] = di;
        }
        Ok(())
    }

    /// Smallest ratio of a pivot to its shifted diagonal entry in the last
    /// factorization.
    pub(crate) fn min_relative_pivot(&self) -> f64 {
        (0..self.n)
            .map(|i| self.d[i] / (self.a[self.row_start[i] + (i - self.first[i])] + self.shift[self.perm[i]]))
            .fold(f64::INFINITY, f64::min)
    }

    /// ‖A‖∞ of the stored (unshifted) matrix.
    pub(crate) fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for i in 0..self.n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            for j in fi..i {
                let v = self.a[ri + (j - fi)].abs();
                rows[i] += v;
                rows[j] += v;
            }
            rows[i] += self.a[ri + (i - fi)].abs();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Solves with the factor in place (original indexing).
    pub(crate) fn solve(&self, rhs: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|i| rhs[self.perm[i]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.l[ri + (k - fi)] * y[k];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.l[ri + (k - fi)] * yi;
            }
        }
        for i in 0..n {
            rhs[self.perm[i]] = y[i];
        }
    }

    /// `y = A x` with the stored (unshifted) matrix.
    pub(crate) fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let xp: Vec<f64> = (0..n).map(|i| x[self.perm[i]]).collect();
        let mut yp = vec![0.0; n];
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            for j in fi..i {
                let v = self.a[ri + (j - fi)];
                yp[i] += v * xp[j];
                yp[j] += v * xp[i];
            }
            yp[i] += self.a[ri + (i - fi)] * xp[i];
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[self.perm[i]] = yp[i];
        }
        y
    }

    /// Solves `A x = b` for the unshifted stored matrix using the shifted factor
    /// plus iterative refinement. Stops once the relative residual is below
    /// `rtol` or after `max_iter` corrections.
    pub(crate) fn solve_refined(&self, b: &[f64], max_iter: usize, rtol: f64) -> (Vec<f64>, RefineReport) {
        let bnorm = inf_norm(b).max(1.0);
        let mut x = b.to_vec();
        self.solve(&mut x);
        let mut report = RefineReport { residual: f64::INFINITY, iterations: 0 };
        for it in 0..=max_iter {
            let ax = self.matvec(&x);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let res = inf_norm(&r) / bnorm;
            report = RefineReport { residual: res, iterations: it };
            if res <= rtol || it == max_iter || !res.is_finite() {
                break;
            }
            self.solve(&mut r);
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
        }
        (x, report)
    }
}

/// Max-abs norm; NaN entries propagate.
pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).expect("unvisited node exists");
        let start = pseudo_peripheral(adj, &degree, seed);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut node = seed;
    let mut ecc = 0;
    for _ in 0..4 {
        let levels = bfs_levels(adj, node);
        let max_level = levels.iter().filter_map(|&l| l).max().unwrap_or(0);
        if max_level <= ecc && ecc > 0 {
            break;
        }
        ecc = max_level;
        node = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(max_level))
            .map(|(i, _)| i)
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(node);
    }
    node
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    level[start] = Some(0);
    queue.push_back(start);
    while let Some(v) = queue.pop_front() {
        let lv = level[v].unwrap();
        for &u in &adj[v] {
            if level[u].is_none() {
                level[u] = Some(lv + 1);
                queue.push_back(u);
            }
        }
    }
    level
}
