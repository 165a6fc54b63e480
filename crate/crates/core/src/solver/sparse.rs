//! Compressed sparse rows, reverse Cuthill–McKee ordering, and a banded LU
//! factorization with partial pivoting.

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

/// Coordinate-format accumulator; duplicates are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.entries.push((i, j, v));
    }

    pub fn to_csr(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(a: &nalgebra::DMatrix<f64>) -> Self {
        let mut t = TripletBuilder::new(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push(i, j, a[(i, j)]);
                }
            }
        }
        t.to_csr()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            a[(i, j)] += v;
        }
        a
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| {
                self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum()
            })
            .fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.ncols, self.nrows);
        for (i, j, v) in self.iter() {
            t.push(j, i, v);
        }
        t.to_csr()
    }
}

/// Reverse Cuthill–McKee permutation of the symmetrized pattern:
/// `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.iter() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        let root = peripheral(start, &adj, &degree);
        visited[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Pseudo-peripheral node of the component containing `start`.
fn peripheral(start: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut root = start;
    let mut ecc = 0;
    loop {
        let levels = bfs_levels(root, adj);
        let depth = *levels.iter().filter_map(|l| l.as_ref()).max().unwrap();
        if depth <= ecc && root != start {
            return root;
        }
        ecc = depth;
        let candidate = (0..adj.len())
            .filter(|&v| levels[v] == Some(depth))
            .min_by_key(|&v| (degree[v], v))
            .unwrap();
        if candidate == root {
            return root;
        }
        let cand_depth = *bfs_levels(candidate, adj)
            .iter()
            .filter_map(|l| l.as_ref())
            .max()
            .unwrap();
        if cand_depth <= ecc {
            return root;
        }
        root = candidate;
    }
}

fn bfs_levels(root: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let l = level[v].unwrap();
        for &w in &adj[v] {
            if level[w].is_none() {
                level[w] = Some(l + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum FactorError {
    #[error("zero pivot in column {column} (pivot growth estimate {condition_estimate:.3e})")]
    ZeroPivot { column: usize, condition_estimate: f64 },
    #[error("matrix is not square ({0} x {1})")]
    NotSquare(usize, usize),
}

/// LU factors of `P A P^T` in LAPACK general-band layout.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    perm: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self, FactorError> {
        if a.nrows != a.ncols {
            return Err(FactorError::NotSquare(a.nrows, a.ncols));
        }
        let n = a.nrows;
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for (i, j, _) in a.iter() {
            let (pi, pj) = (inv[i], inv[j]);
            if pi > pj {
                kl = kl.max(pi - pj);
            } else {
                ku = ku.max(pj - pi);
            }
        }
        let ld = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            ku,
            ld,
            ab: vec![0.0; ld * n],
            ipiv: vec![0; n],
            perm,
        };
        for (i, j, v) in a.iter() {
            *lu.at(inv[i], inv[j]) += v;
        }
        lu.factorize()?;
        Ok(lu)
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ld + self.kl + self.ku + i - j
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.idx(i, j);
        &mut self.ab[k]
    }

    fn factorize(&mut self) -> Result<(), FactorError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut ju = 0;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = self.ab[self.idx(j, j)].abs();
            for i in 1..=km {
                let v = self.ab[self.idx(j + i, j)].abs();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            self.ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(FactorError::ZeroPivot {
                    column: j,
                    condition_estimate: f64::INFINITY,
                });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for jj in j..=ju {
                    let (a, b) = (self.idx(j, jj), self.idx(j + jp, jj));
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.idx(j, j)];
            for i in 1..=km {
                *self.at(j + i, j) /= pivot;
            }
            for jj in j + 1..=ju {
                let t = self.ab[self.idx(j, jj)];
                if t != 0.0 {
                    for i in 1..=km {
                        let l = self.ab[self.idx(j + i, j)];
                        *self.at(j + i, jj) -= l * t;
                    }
                }
            }
        }
        Ok(())
    }

    /// Ratio of largest to smallest pivot magnitude; a cheap lower bound on
    /// the condition number of `U`.
    pub fn condition_estimate(&self) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for j in 0..self.n {
            let v = self.ab[self.idx(j, j)].abs();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi / lo
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let kv = self.kl + self.ku;
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            let xj = x[j];
            if xj != 0.0 {
                for i in 1..=km {
                    x[j + i] -= self.ab[self.idx(j + i, j)] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            x[j] /= self.ab[self.idx(j, j)];
            let xj = x[j];
            if xj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    x[i] -= self.ab[self.idx(i, j)] * xj;
                }
            }
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}
