//! Sparse symmetric matrices and a direct envelope Cholesky solver.
//!
//! Rows are reordered with reverse Cuthill-McKee before factorisation, which
//! keeps the profile of mesh Laplacians small enough that a skyline factor is
//! both simple and fast.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Accumulates (row, col, value) entries; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i, j, v));
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry present") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Square matrix in compressed sparse row form, columns sorted per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// Quadratic form xᵀAx.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Principal submatrix on `keep` (new index order follows `keep`).
    fn submatrix(&self, keep: &[usize], map: &[usize]) -> CsrMatrix {
        let mut b = TripletBuilder::new(keep.len());
        for (ni, &i) in keep.iter().enumerate() {
            for (j, v) in self.row(i) {
                if map[j] != usize::MAX {
                    b.add(ni, map[j], v);
                }
            }
        }
        b.build()
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric sparsity pattern.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).map(|(j, _)| j).filter(|&j| !visited[j]).collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(a: &CsrMatrix, start: usize) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; a.dim()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(v) = queue.pop_front() {
        last = v;
        for (j, _) in a.row(v) {
            if level[j] == usize::MAX {
                level[j] = level[v] + 1;
                queue.push_back(j);
            }
        }
    }
    (level, last)
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut v = seed;
    let (mut level, _) = bfs_levels(a, v);
    let mut ecc = level.iter().filter(|&&l| l != usize::MAX).max().copied().unwrap_or(0);
    for _ in 0..8 {
        let far = (0..a.dim())
            .filter(|&i| level[i] == ecc)
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(v);
        let (l2, _) = bfs_levels(a, far);
        let e2 = l2.iter().filter(|&&l| l != usize::MAX).max().copied().unwrap_or(0);
        if e2 <= ecc {
            break;
        }
        v = far;
        level = l2;
        ecc = e2;
    }
    v
}

/// Skyline Cholesky factor L of P·A·Pᵀ.
#[derive(Debug, Clone)]
pub struct Cholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric positive definite matrix.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let perm = rcm_ordering(a);
        let mut inv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (i, &pi) in perm.iter().enumerate() {
            for (j, _) in a.row(pi) {
                first[i] = first[i].min(inv[j]);
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; start[n]];
        for (i, &pi) in perm.iter().enumerate() {
            for (j, v) in a.row(pi) {
                let pj = inv[j];
                if pj <= i {
                    values[start[i] + pj - first[i]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = values[start[i] + j - fi];
                let ri = &values[start[i] + k0 - fi..start[i] + j - fi];
                let rj = &values[start[j] + k0 - fj..start[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                if j < i {
                    values[start[i] + j - fi] = s / values[start[j + 1] - 1];
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Singular { row: perm[i], pivot: s });
                    }
                    values[start[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self {
            perm,
            first,
            start,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(l, x)| l * x).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

/// Solver for A x = b with some entries of x prescribed.
///
/// The free block is factored once; each call to [`DirichletSolver::solve`]
/// moves the prescribed values to the right-hand side.
#[derive(Debug, Clone)]
pub struct DirichletSolver {
    a: CsrMatrix,
    free: Vec<usize>,
    fixed: Vec<bool>,
    chol: Cholesky,
}

impl DirichletSolver {
    pub fn new(a: &CsrMatrix, fixed: &[bool]) -> Result<Self> {
        let n = a.dim();
        if fixed.len() != n {
            return Err(Error::Dimension(format!("mask has {} entries, matrix is {n}", fixed.len())));
        }
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let mut map = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            map[i] = k;
        }
        let sub = a.submatrix(&free, &map);
        let chol = Cholesky::factor(&sub)?;
        Ok(Self {
            a: a.clone(),
            free,
            fixed: fixed.to_vec(),
            chol,
        })
    }

    /// `values` supplies the prescribed entries (other entries ignored);
    /// `rhs` defaults to zero.
    pub fn solve(&self, values: &[f64], rhs: Option<&[f64]>) -> Vec<f64> {
        let b: Vec<f64> = self
            .free
            .iter()
            .map(|&i| {
                let mut s = rhs.map_or(0.0, |r| r[i]);
                for (j, v) in self.a.row(i) {
                    if self.fixed[j] {
                        s -= v * values[j];
                    }
                }
                s
            })
            .collect();
        let xf = self.chol.solve(&b);
        let mut x: Vec<f64> = (0..values.len())
            .map(|i| if self.fixed[i] { values[i] } else { 0.0 })
            .collect();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = xf[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn grid_laplacian(w: usize, h: usize, shift: f64) -> CsrMatrix {
        let n = w * h;
        let mut b = TripletBuilder::new(n);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                b.add(i, i, shift);
                let mut link = |j: usize| {
                    b.add(i, i, 1.0);
                    b.add(i, j, -1.0);
                };
                if x + 1 < w {
                    link(i + 1);
                }
                if x > 0 {
                    link(i - 1);
                }
                if y + 1 < h {
                    link(i + w);
                }
                if y > 0 {
                    link(i - w);
                }
            }
        }
        b.build()
    }

    fn dense(a: &CsrMatrix) -> DMatrix<f64> {
        let n = a.dim();
        DMatrix::from_fn(n, n, |i, j| a.get(i, j))
    }

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2);
        b.add(0, 0, 1.0);
        b.add(0, 0, 2.0);
        b.add(1, 0, -1.0);
        let m = b.build();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = grid_laplacian(7, 5, 0.1);
        let mut p = rcm_ordering(&a);
        p.sort_unstable();
        assert_eq!(p, (0..35).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_matches_dense_lu() {
        let a = grid_laplacian(9, 6, 0.05);
        let b: Vec<f64> = (0..a.dim()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let x = Cholesky::factor(&a).unwrap().solve(&b);
        let xd = dense(&a).lu().solve(&DVector::from_vec(b)).unwrap();
        for (p, q) in x.iter().zip(xd.iter()) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = grid_laplacian(4, 4, 0.0);
        assert!(matches!(Cholesky::factor(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn dirichlet_linear_field_is_harmonic() {
        // graph Laplacian reproduces a field linear in x along rows
        let (w, h) = (8, 5);
        let a = grid_laplacian(w, h, 0.0);
        let fixed: Vec<bool> = (0..w * h).map(|i| i % w == 0 || i % w == w - 1).collect();
        let vals: Vec<f64> = (0..w * h).map(|i| (i % w) as f64 * 0.5).collect();
        let s = DirichletSolver::new(&a, &fixed).unwrap();
        let x = s.solve(&vals, None);
        for i in 0..w * h {
            assert!((x[i] - vals[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn solve_residual_small(w in 2usize..9, h in 2usize..9, shift in 0.01f64..2.0, seed in 0u64..1000) {
            let a = grid_laplacian(w, h, shift);
            let b: Vec<f64> = (0..a.dim()).map(|i| (((i as u64 + 1) * (seed + 17)) % 23) as f64 - 11.0).collect();
            let x = Cholesky::factor(&a).unwrap().solve(&b);
            let r = a.mul_vec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                prop_assert!((ri - bi).abs() < 1e-9);
            }
        }
    }
}
