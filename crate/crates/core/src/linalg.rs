//! Sparse assembly and a banded LU with partial pivoting after bandwidth reducing reordering.

use std::collections::VecDeque;

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular system: zero pivot in column {column}")]
    Singular { column: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Coordinate format accumulator; duplicates are summed on conversion.
#[derive(Clone, Debug)]
pub struct Triplets<T> {
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> Triplets<T> {
    pub fn new(n: usize) -> Self {
        Triplets { n, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i, j, v));
    }

    /// Drops every entry of row `i`.
    pub fn clear_row(&mut self, i: usize) {
        self.entries.retain(|e| e.0 != i);
    }

    pub fn to_csr(&self) -> Csr<T> {
        let mut entries = self.entries.clone();
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col = Vec::with_capacity(entries.len());
        let mut val: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(j);
                val.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n: self.n, row_ptr, col, val }
    }
}

/// Square compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct Csr<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<T>,
}

impl<T: Real> Csr<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).find(|(c, _)| *c == j).map_or(T::zero(), |(_, v)| v)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col[k], self.val[k]))
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrized sparsity graph. `perm[new] = old`.
pub fn reverse_cuthill_mckee<T: Real>(a: &Csr<T>) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    let deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| deg[i]);
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &deg);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| deg[w]);
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], deg: &[usize]) -> usize {
    let mut start = seed;
    let mut best_ecc = 0;
    for _ in 0..4 {
        let levels = bfs_levels(start, adj);
        let ecc = *levels.iter().filter_map(|l| *l).collect::<Vec<_>>().iter().max().unwrap_or(&0);
        if ecc <= best_ecc && best_ecc > 0 {
            break;
        }
        best_ecc = ecc;
        let candidate = (0..adj.len()).filter(|&v| levels[v] == Some(ecc)).min_by_key(|&v| deg[v]).unwrap();
        if candidate == start {
            break;
        }
        start = candidate;
    }
    start
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
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

/// LU factors of a symmetrically equilibrated, reordered band matrix.
#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<T>,
    ipiv: Vec<usize>,
    perm: Vec<usize>,
    scale: Vec<T>,
}

impl<T: Real> BandedLu<T> {
    pub fn factor(a: &Csr<T>) -> Result<Self, LinalgError> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_order(a, perm)
    }

    /// `perm[new] = old`.
    pub fn factor_with_order(a: &Csr<T>, perm: Vec<usize>) -> Result<Self, LinalgError> {
        let n = a.n;
        if perm.len() != n {
            return Err(LinalgError::Dimension("ordering length".into()));
        }
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut scale = vec![T::one(); n];
        for i in 0..n {
            let m = a.row(i).fold(T::zero(), |m, (_, v)| m.max(v.abs()));
            if m > T::zero() {
                scale[i] = T::one() / m.sqrt();
            }
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            for (j, v) in a.row(i) {
                if v == T::zero() {
                    continue;
                }
                let (r, c) = (inv[i], inv[j]);
                if r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        let ld = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut ab = vec![T::zero(); ld * n];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if v == T::zero() {
                    continue;
                }
                let (r, c) = (inv[i], inv[j]);
                ab[c * ld + kv + r - c] += v * scale[i] * scale[j];
            }
        }
        let mut ipiv = vec![0usize; n];
        let tiny = T::lit(1e-13);
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld + kv;
            let mut jp = 0;
            let mut best = ab[col].abs();
            for i in 1..=km {
                let v = ab[col + i].abs();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            if !(best > tiny) {
                return Err(LinalgError::Singular { column: perm[j] });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let base = c * ld + kv + j - c;
                    ab.swap(base, base + jp);
                }
            }
            if km > 0 {
                let pivot = ab[col];
                for i in 1..=km {
                    ab[col + i] /= pivot;
                }
                for c in (j + 1)..=ju {
                    let base = c * ld + kv + j - c;
                    let f = ab[base];
                    if f != T::zero() {
                        for i in 1..=km {
                            let l = ab[col + i];
                            ab[base + i] -= l * f;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, ld, ab, ipiv, perm, scale })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Solve followed by `steps` rounds of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &Csr<T>, b: &[T], steps: usize) -> Vec<T> {
        let mut x = self.solve(b);
        for _ in 0..steps {
            let ax = a.matvec(&x);
            let r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
            let dx = self.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += *di;
            }
        }
        x
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let (ld, kv) = (self.ld, self.kl + self.ku);
        let mut x: Vec<T> = self.perm.iter().map(|&old| b[old] * self.scale[old]).collect();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            let xj = x[j];
            if xj != T::zero() {
                for i in 1..=km {
                    x[j + i] -= self.ab[j * ld + kv + i] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            x[j] /= self.ab[j * ld + kv];
            let xj = x[j];
            if xj != T::zero() {
                for i in 1..=kv.min(j) {
                    x[j - i] -= self.ab[j * ld + kv - i] * xj;
                }
            }
        }
        let mut out = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new] * self.scale[old];
        }
        out
    }
}
