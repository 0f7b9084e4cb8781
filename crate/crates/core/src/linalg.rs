//! Small dense linear algebra kernels and a coordinate-format sparse matrix.
//!
//! Everything here is sized for per-subsystem work (orders up to a few
//! thousand), so the matrices are stored densely in row-major order and the
//! factorizations are unblocked right-looking variants whose inner loops run
//! over contiguous rows.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from a slice of equally long rows.
    ///
    /// Panics if the rows have different lengths.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `y = self * x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `y = self^T * x`
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut y);
            }
        }
        y
    }

    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a != 0.0 {
                    let (src, dst) = (other.row(k), i);
                    axpy(a, src, out.row_mut(dst));
                }
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        inf_norm(&self.data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Replaces the matrix by `(A + A^T) / 2`.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    /// Maximum absolute asymmetry `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Copies `block` into `self` with its top-left corner at `(row, col)`.
    pub fn set_block(&mut self, row: usize, col: usize, block: &DenseMatrix) {
        for i in 0..block.rows {
            let dst = &mut self.row_mut(row + i)[col..col + block.cols];
            dst.copy_from_slice(block.row(i));
        }
    }

    pub fn block(&self, row: usize, col: usize, rows: usize, cols: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rows, cols);
        for i in 0..rows {
            out.row_mut(i)
                .copy_from_slice(&self.row(row + i)[col..col + cols]);
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Sparse matrix in coordinate (triplet) form. Duplicate entries are summed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CooMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn from_triplets(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        for &(i, j, _) in &entries {
            assert!(i < rows && j < cols, "triplet ({i}, {j}) out of bounds");
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.rows && col < self.cols);
        self.entries.push((row, col, value));
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_add(x, &mut y);
        y
    }

    /// `y += A x`
    pub fn mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
        }
    }

    /// `y += A^T x`
    pub fn tr_mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        for &(i, j, v) in &self.entries {
            y[j] += v * x[i];
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            d[(i, j)] += v;
        }
        d
    }

    /// Sorted, deduplicated list of rows holding at least one nonzero.
    pub fn nonzero_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .entries
            .iter()
            .filter(|e| e.2 != 0.0)
            .map(|e| e.0)
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    /// Nonzero entries of one row as `(col, value)` pairs.
    pub fn row_entries(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .iter()
            .filter(move |e| e.0 == row && e.2 != 0.0)
            .map(|e| (e.1, e.2))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Failure modes of the dense factorizations.
#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("pivot {pivot:e} at step {step} below threshold {threshold:e}")]
    Singular {
        step: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("non-finite entry in matrix")]
    NonFinite,
}

/// Pivot threshold used by both factorizations, relative to the largest
/// entry of the pivot's original row. Row-relative rather than global so
/// that barrier terms, which grow without bound near the boundary, do not
/// make well-defined pivots elsewhere look singular.
pub const PIVOT_TOL: f64 = 1e-12;

fn row_scales(a: &DenseMatrix) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .collect()
}

/// LU factorization with partial (row) pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(mut a: DenseMatrix) -> Result<Self, FactorError> {
        if !a.is_square() {
            return Err(FactorError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if !a.all_finite() {
            return Err(FactorError::NonFinite);
        }
        let n = a.nrows();
        let scales = row_scales(&a);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut p, mut best) = (k, a[(k, k)].abs());
            for i in (k + 1)..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            let threshold = PIVOT_TOL * scales[perm[p]];
            if best <= threshold {
                return Err(FactorError::Singular {
                    step: k,
                    pivot: best,
                    threshold,
                });
            }
            if p != k {
                swap_rows(&mut a, k, p);
                perm.swap(k, p);
            }
            let pivot = a[(k, k)];
            let (upper, lower) = a.data.split_at_mut((k + 1) * n);
            let pivot_row = &upper[k * n + k + 1..(k + 1) * n];
            for row in lower.chunks_exact_mut(n) {
                let l = row[k] / pivot;
                row[k] = l;
                if l != 0.0 {
                    for (x, &u) in row[k + 1..].iter_mut().zip(pivot_row) {
                        *x -= l * u;
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn order(&self) -> usize {
        self.lu.nrows()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.order();
        assert_eq!(rhs.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = dot(&row[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}

fn swap_rows(a: &mut DenseMatrix, i: usize, j: usize) {
    if i == j {
        return;
    }
    let n = a.ncols();
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let (first, second) = a.data.split_at_mut(hi * n);
    first[lo * n..(lo + 1) * n].swap_with_slice(&mut second[..n]);
}

fn swap_cols(a: &mut DenseMatrix, i: usize, j: usize) {
    if i == j {
        return;
    }
    for r in 0..a.nrows() {
        let row = a.row_mut(r);
        row.swap(i, j);
    }
}

/// Number of positive, negative and zero eigenvalues of a symmetric matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Clone, Copy, Debug)]
enum Pivot {
    One { swap: usize },
    Two { swap: usize },
}

/// Symmetric indefinite factorization `P A P^T = L D L^T` with Bunch-Kaufman
/// pivoting. `D` has 1x1 and 2x2 diagonal blocks, which makes the inertia of
/// `A` available for free.
#[derive(Clone, Debug)]
pub struct Ldlt {
    // strictly lower part holds L, diagonal/subdiagonal hold D
    factors: DenseMatrix,
    pivots: Vec<(usize, Pivot)>,
    inertia: Inertia,
}

impl Ldlt {
    /// Factorizes a symmetric matrix. Only symmetry within rounding is
    /// assumed; the full matrix is updated.
    pub fn factor(mut a: DenseMatrix) -> Result<Self, FactorError> {
        if !a.is_square() {
            return Err(FactorError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if !a.all_finite() {
            return Err(FactorError::NonFinite);
        }
        let n = a.nrows();
        let scales = row_scales(&a);
        let mut order: Vec<usize> = (0..n).collect();
        // (1 + sqrt(17)) / 8
        let alpha = 0.640_388_203_202_208_4;
        let mut pivots = Vec::new();
        let mut inertia = Inertia::default();
        let mut k = 0;
        while k < n {
            let absakk = a[(k, k)].abs();
            let (mut imax, mut colmax) = (k, 0.0_f64);
            for i in (k + 1)..n {
                let v = a[(i, k)].abs();
                if v > colmax {
                    colmax = v;
                    imax = i;
                }
            }
            let threshold = PIVOT_TOL * scales[order[k]].max(scales[order[imax]]);
            if absakk.max(colmax) <= threshold {
                return Err(FactorError::Singular {
                    step: k,
                    pivot: absakk.max(colmax),
                    threshold,
                });
            }
            let pivot = if absakk >= alpha * colmax {
                Pivot::One { swap: k }
            } else {
                let mut rowmax = 0.0_f64;
                for j in k..n {
                    if j != imax {
                        rowmax = rowmax.max(a[(imax, j)].abs());
                    }
                }
                if absakk * rowmax >= alpha * colmax * colmax {
                    Pivot::One { swap: k }
                } else if a[(imax, imax)].abs() >= alpha * rowmax {
                    Pivot::One { swap: imax }
                } else {
                    Pivot::Two { swap: imax }
                }
            };
            match pivot {
                Pivot::One { swap } => {
                    swap_rows(&mut a, k, swap);
                    swap_cols(&mut a, k, swap);
                    order.swap(k, swap);
                    let d = a[(k, k)];
                    let threshold = PIVOT_TOL * scales[order[k]];
                    if d.abs() <= threshold {
                        return Err(FactorError::Singular {
                            step: k,
                            pivot: d.abs(),
                            threshold,
                        });
                    }
                    if d > 0.0 {
                        inertia.positive += 1;
                    } else {
                        inertia.negative += 1;
                    }
                    let pivot_row: Vec<f64> = a.row(k)[k + 1..].to_vec();
                    for i in (k + 1)..n {
                        let l = a[(i, k)] / d;
                        if l != 0.0 {
                            let row = &mut a.row_mut(i)[k + 1..];
                            axpy(-l, &pivot_row, row);
                        }
                        a[(i, k)] = l;
                    }
                    pivots.push((k, pivot));
                    k += 1;
                }
                Pivot::Two { swap } => {
                    swap_rows(&mut a, k + 1, swap);
                    swap_cols(&mut a, k + 1, swap);
                    order.swap(k + 1, swap);
                    let threshold = PIVOT_TOL * scales[order[k]].max(scales[order[k + 1]]);
                    let (d11, d21, d22) = (a[(k, k)], a[(k + 1, k)], a[(k + 1, k + 1)]);
                    let det = d11 * d22 - d21 * d21;
                    let half_tr = 0.5 * (d11 + d22);
                    let disc = libm::sqrt(0.25 * (d11 - d22) * (d11 - d22) + d21 * d21);
                    let (e1, e2) = (half_tr + disc, half_tr - disc);
                    if e1.abs().min(e2.abs()) <= threshold || det == 0.0 {
                        return Err(FactorError::Singular {
                            step: k,
                            pivot: e1.abs().min(e2.abs()),
                            threshold,
                        });
                    }
                    for e in [e1, e2] {
                        if e > 0.0 {
                            inertia.positive += 1;
                        } else {
                            inertia.negative += 1;
                        }
                    }
                    let row_k: Vec<f64> = a.row(k)[k + 2..].to_vec();
                    let row_k1: Vec<f64> = a.row(k + 1)[k + 2..].to_vec();
                    for i in (k + 2)..n {
                        let (u, w) = (a[(i, k)], a[(i, k + 1)]);
                        let l0 = (d22 * u - d21 * w) / det;
                        let l1 = (d11 * w - d21 * u) / det;
                        let row = &mut a.row_mut(i)[k + 2..];
                        if l0 != 0.0 {
                            axpy(-l0, &row_k, row);
                        }
                        if l1 != 0.0 {
                            axpy(-l1, &row_k1, row);
                        }
                        a[(i, k)] = l0;
                        a[(i, k + 1)] = l1;
                    }
                    pivots.push((k, pivot));
                    k += 2;
                }
            }
        }
        Ok(Self {
            factors: a,
            pivots,
            inertia,
        })
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn order(&self) -> usize {
        self.factors.nrows()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.order();
        assert_eq!(rhs.len(), n);
        let f = &self.factors;
        let mut x = rhs.to_vec();
        // L is stored for the fully permuted matrix, so permute up front
        for &(k, piv) in &self.pivots {
            match piv {
                Pivot::One { swap } => x.swap(k, swap),
                Pivot::Two { swap } => x.swap(k + 1, swap),
            }
        }
        for &(k, piv) in &self.pivots {
            match piv {
                Pivot::One { .. } => {
                    let xk = x[k];
                    if xk != 0.0 {
                        for i in (k + 1)..n {
                            x[i] -= f[(i, k)] * xk;
                        }
                    }
                }
                Pivot::Two { .. } => {
                    let (xk, xk1) = (x[k], x[k + 1]);
                    for i in (k + 2)..n {
                        x[i] -= f[(i, k)] * xk + f[(i, k + 1)] * xk1;
                    }
                }
            }
        }
        // block diagonal
        for &(k, piv) in &self.pivots {
            match piv {
                Pivot::One { .. } => x[k] /= f[(k, k)],
                Pivot::Two { .. } => {
                    let (d11, d21, d22) = (f[(k, k)], f[(k + 1, k)], f[(k + 1, k + 1)]);
                    let det = d11 * d22 - d21 * d21;
                    let (b1, b2) = (x[k], x[k + 1]);
                    x[k] = (d22 * b1 - d21 * b2) / det;
                    x[k + 1] = (d11 * b2 - d21 * b1) / det;
                }
            }
        }
        // backward: unit upper (L^T) solve, then undo the permutation
        for &(k, piv) in self.pivots.iter().rev() {
            match piv {
                Pivot::One { .. } => {
                    let mut s = 0.0;
                    for i in (k + 1)..n {
                        s += f[(i, k)] * x[i];
                    }
                    x[k] -= s;
                }
                Pivot::Two { .. } => {
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for i in (k + 2)..n {
                        s0 += f[(i, k)] * x[i];
                        s1 += f[(i, k + 1)] * x[i];
                    }
                    x[k] -= s0;
                    x[k + 1] -= s1;
                }
            }
        }
        for &(k, piv) in self.pivots.iter().rev() {
            match piv {
                Pivot::One { swap } => x.swap(k, swap),
                Pivot::Two { swap } => x.swap(k + 1, swap),
            }
        }
        x
    }
}
