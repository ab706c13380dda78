//! Sparse and banded linear algebra used by the assembly and solver layers.

use crate::Error;

/// Compressed sparse row matrix with `f64` entries.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Triplet accumulator; duplicate entries are summed on conversion.
#[derive(Debug, Clone)]
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        // stable sort: duplicates of (r,c) and (c,r) are then summed in the
        // same push order, keeping symmetric assembly exactly symmetric
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// y += s * A x
    pub fn axpy(&self, s: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] += s * acc;
        }
    }

    /// y += s * A^T x
    pub fn axpy_transpose(&self, s: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let xs = s * x[r];
            if xs != 0.0 {
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    y[self.col_idx[k]] += self.values[k] * xs;
                }
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.axpy(1.0, x, &mut y);
        y
    }

    /// x^T A y (A need not be symmetric).
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.nrows {
            let mut row_acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row_acc += self.values[k] * y[self.col_idx[k]];
            }
            acc += x[r] * row_acc;
        }
        acc
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    d[r] = self.values[k];
                }
            }
        }
        d
    }

    /// Maximum |A - A^T| entry; zero for exactly symmetric matrices.
    pub fn symmetry_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let v = self.values[k];
                let vt = self.get(c, r);
                defect = defect.max((v - vt).abs());
            }
        }
        defect
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.col_idx[k] == c {
                return self.values[k];
            }
        }
        0.0
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }
}

/// Cholesky factorization of a symmetric positive definite band matrix.
///
/// The band profile comes from the lattice ordering of the FE degrees of
/// freedom, so no reordering is applied. Stores the lower factor row by
/// row within the semi-bandwidth.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // factor[r * (bw+1) + (bw - (r - c))] holds L[r][c] for r-bw <= c <= r
    factor: Vec<f64>,
}

impl BandedCholesky {
    /// Factorize a CSR matrix assumed SPD; only the lower triangle is read.
    pub fn new(a: &CsrMatrix) -> Result<Self, Error> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let mut bw = 0usize;
        for r in 0..n {
            for (c, _) in a.row(r) {
                if c < r {
                    bw = bw.max(r - c);
                }
            }
        }
        let stride = bw + 1;
        let mut f = vec![0.0f64; n * stride];
        for r in 0..n {
            for (c, v) in a.row(r) {
                if c <= r {
                    f[r * stride + (bw - (r - c))] = v;
                }
            }
        }
        // Row-oriented band Cholesky.
        for r in 0..n {
            let lo = r.saturating_sub(bw);
            for c in lo..r {
                // L[r][c] = (A[r][c] - sum_{t<c} L[r][t] L[c][t]) / L[c][c]
                let tlo = lo.max(c.saturating_sub(bw));
                let mut s = f[r * stride + (bw - (r - c))];
                for t in tlo..c {
                    s -= f[r * stride + (bw - (r - t))] * f[c * stride + (bw - (c - t))];
                }
                f[r * stride + (bw - (r - c))] = s / f[c * stride + bw];
            }
            let mut s = f[r * stride + bw];
            for t in lo..r {
                let l = f[r * stride + (bw - (r - t))];
                s -= l * l;
            }
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::IndefinitePreconditioner);
            }
            f[r * stride + bw] = s.sqrt();
        }
        Ok(Self { n, bw, factor: f })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        let stride = self.bw + 1;
        // forward: L y = b
        for r in 0..self.n {
            let lo = r.saturating_sub(self.bw);
            let mut s = x[r];
            for c in lo..r {
                s -= self.factor[r * stride + (self.bw - (r - c))] * x[c];
            }
            x[r] = s / self.factor[r * stride + self.bw];
        }
        // backward: L^T x = y
        for r in (0..self.n).rev() {
            let hi = (r + self.bw + 1).min(self.n);
            let mut s = x[r];
            for c in (r + 1)..hi {
                s -= self.factor[c * stride + (self.bw - (c - r))] * x[c];
            }
            x[r] = s / self.factor[r * stride + self.bw];
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
///
/// Used for the detail-space Gram solves, where one level of hierarchical
/// splitting keeps the diagonally scaled spectrum bounded independently of
/// the mesh size.
pub fn jacobi_pcg(
    a: &CsrMatrix,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, Error> {
    let n = a.nrows();
    let mut inv_diag = a.diagonal();
    for d in inv_diag.iter_mut() {
        if *d <= 0.0 {
            return Err(Error::SingularDetailGram);
        }
        *d = 1.0 / *d;
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = norm(&r);
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        ap.iter_mut().for_each(|v| *v = 0.0);
        a.axpy(1.0, &p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SingularDetailGram);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= rel_tol * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::DetailSolveStagnated(norm(&r) / b_norm))
}

/// Block-diagonal SPD matrix with equal-size dense blocks, stored factored.
///
/// Covers the discontinuous pressure mass matrices, whose couplings never
/// leave an element.
#[derive(Debug, Clone)]
pub struct BlockDiagonalSolver {
    block: usize,
    // Cholesky factors of each block, row-major lower triangles.
    factors: Vec<f64>,
    n: usize,
}

impl BlockDiagonalSolver {
    pub fn new(a: &CsrMatrix, block: usize) -> Result<Self, Error> {
        let n = a.nrows();
        assert_eq!(n % block, 0);
        let nb = n / block;
        let mut factors = vec![0.0; nb * block * block];
        for b in 0..nb {
            let base = b * block;
            let fb = &mut factors[b * block * block..(b + 1) * block * block];
            for i in 0..block {
                for (c, v) in a.row(base + i) {
                    debug_assert!(c >= base && c < base + block, "entry outside block");
                    fb[i * block + (c - base)] = v;
                }
            }
            // dense Cholesky in place (lower)
            for i in 0..block {
                for j in 0..i {
                    let mut s = fb[i * block + j];
                    for t in 0..j {
                        s -= fb[i * block + t] * fb[j * block + t];
                    }
                    fb[i * block + j] = s / fb[j * block + j];
                }
                let mut s = fb[i * block + i];
                for t in 0..i {
                    s -= fb[i * block + t] * fb[i * block + t];
                }
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::SingularDetailGram);
                }
                fb[i * block + i] = s.sqrt();
            }
        }
        Ok(Self { block, factors, n })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        let m = self.block;
        for b in 0..self.n / m {
            let fb = &self.factors[b * m * m..(b + 1) * m * m];
            let xb = &mut x[b * m..(b + 1) * m];
            for i in 0..m {
                let mut s = xb[i];
                for t in 0..i {
                    s -= fb[i * m + t] * xb[t];
                }
                xb[i] = s / fb[i * m + i];
            }
            for i in (0..m).rev() {
                let mut s = xb[i];
                for t in (i + 1)..m {
                    s -= fb[t * m + i] * xb[t];
                }
                xb[i] = s / fb[i * m + i];
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
