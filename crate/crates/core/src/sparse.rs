//! Sparse matrix storage, direct LU factorization, and dense vector kernels.
//!
//! The direct solver picks its storage from the matrix bandwidth: FEM
//! Jacobians on structured grids are narrowly banded, so a pivoted banded LU
//! (LAPACK `dgbtrf`-style) covers them with linear memory; anything with a
//! wide band falls back to dense LU with partial pivoting.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row and duplicate
/// triplets are summed on construction (FEM assembly semantics).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(
        triplets: &[(usize, usize, f64)],
        nrows: usize,
        ncols: usize,
    ) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::IndexOutOfRange {
                    row: i,
                    col: j,
                    nrows,
                    ncols,
                });
            }
        }
        // Count entries per row, then bucket-sort triplets by row.
        let mut counts = vec![0usize; nrows + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut order: Vec<(usize, f64)> = vec![(0, 0.0); triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            order[next[i]] = (j, v);
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for i in 0..nrows {
            let row = &mut order[counts[i]..counts[i + 1]];
            row.sort_unstable_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == col {
                    sum += row[k].1;
                    k += 1;
                }
                col_idx.push(col);
                values.push(sum);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::Dimension {
                expected: self.ncols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
        Ok(y)
    }

    /// y = A^T x
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nrows {
            return Err(Error::Dimension {
                expected: self.nrows,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let xi = x[i];
            if xi != 0.0 {
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    y[self.col_idx[k]] += self.values[k] * xi;
                }
            }
        }
        Ok(y)
    }

    /// Dense copy, row-major. Intended for small oracles and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[i][self.col_idx[k]] = self.values[k];
            }
        }
        d
    }

    /// Largest absolute entry.
    pub fn max_abs_entry(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// (lower, upper) bandwidth of the stored pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if i >= j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }
}

enum Factorization {
    /// LAPACK-style band storage: column j holds the band entries of column
    /// j; after factorization the upper band widens to `kl + ku` and the
    /// multipliers sit below the diagonal.
    Banded {
        n: usize,
        kl: usize,
        ku: usize,
        ab: Vec<f64>,
        ipiv: Vec<usize>,
    },
    Dense {
        n: usize,
        lu: Vec<f64>,
        ipiv: Vec<usize>,
    },
}

/// LU factors with partial pivoting, produced by [`lu_factorize`].
pub struct LuFactors {
    fac: Factorization,
}

/// Relative zero-pivot threshold: pivots at or below `tol * max|A|` are
/// treated as singular.
const PIVOT_REL_TOL: f64 = 1e-14;

/// Factorizes a square CSR matrix with partial pivoting.
///
/// Banded storage is used when the band is narrow enough to beat dense
/// storage; either way the factorization detects singularity against a
/// relative pivot threshold.
pub fn lu_factorize(a: &CsrMatrix) -> Result<LuFactors> {
    if a.nrows != a.ncols {
        return Err(Error::Dimension {
            expected: a.nrows,
            got: a.ncols,
        });
    }
    let n = a.nrows;
    if n == 0 {
        return Err(Error::Dimension {
            expected: 1,
            got: 0,
        });
    }
    let (kl, ku) = a.bandwidths();
    let band_cells = (2 * kl + ku + 1).saturating_mul(n);
    let dense_cells = n.saturating_mul(n);
    let fac = if band_cells < dense_cells {
        factorize_banded(a, kl, ku)?
    } else {
        factorize_dense(a)?
    };
    Ok(LuFactors { fac })
}

fn factorize_banded(a: &CsrMatrix, kl: usize, ku: usize) -> Result<Factorization> {
    let n = a.nrows;
    let ldab = 2 * kl + ku + 1;
    let mut ab = vec![0.0; ldab * n];
    // A(i, j) lives at ab[j * ldab + (kl + ku + i - j)].
    for i in 0..n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            let j = a.col_idx[k];
            ab[j * ldab + (kl + ku + i - j)] = a.values[k];
        }
    }
    let tol = PIVOT_REL_TOL * a.max_abs_entry();
    let mut ipiv = vec![0usize; n];
    let idx = |i: usize, j: usize| j * ldab + (kl + ku + i - j);
    for col in 0..n {
        // Pivot among rows col..=col+kl.
        let last = (col + kl).min(n - 1);
        let mut piv = col;
        let mut pmax = ab[idx(col, col)].abs();
        for r in (col + 1)..=last {
            let v = ab[idx(r, col)].abs();
            if v > pmax {
                pmax = v;
                piv = r;
            }
        }
        if pmax <= tol || !pmax.is_finite() {
            return Err(Error::SingularMatrix { col });
        }
        ipiv[col] = piv;
        let jlast = (col + kl + ku).min(n - 1);
        if piv != col {
            for j in col..=jlast {
                ab.swap(idx(col, j), idx(piv, j));
            }
        }
        let pivot = ab[idx(col, col)];
        for r in (col + 1)..=last {
            let m = ab[idx(r, col)] / pivot;
            ab[idx(r, col)] = m;
            if m != 0.0 {
                for j in (col + 1)..=jlast {
                    ab[idx(r, j)] -= m * ab[idx(col, j)];
                }
            }
        }
    }
    Ok(Factorization::Banded {
        n,
        kl,
        ku,
        ab,
        ipiv,
    })
}

fn factorize_dense(a: &CsrMatrix) -> Result<Factorization> {
    let n = a.nrows;
    let mut lu = vec![0.0; n * n];
    for i in 0..n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            lu[i * n + a.col_idx[k]] = a.values[k];
        }
    }
    let tol = PIVOT_REL_TOL * a.max_abs_entry();
    let mut ipiv = vec![0usize; n];
    for col in 0..n {
        let mut piv = col;
        let mut pmax = lu[col * n + col].abs();
        for r in (col + 1)..n {
            let v = lu[r * n + col].abs();
            if v > pmax {
                pmax = v;
                piv = r;
            }
        }
        if pmax <= tol || !pmax.is_finite() {
            return Err(Error::SingularMatrix { col });
        }
        ipiv[col] = piv;
        if piv != col {
            for j in 0..n {
                lu.swap(col * n + j, piv * n + j);
            }
        }
        let pivot = lu[col * n + col];
        for r in (col + 1)..n {
            let m = lu[r * n + col] / pivot;
            lu[r * n + col] = m;
            if m != 0.0 {
                let (head, tail) = lu.split_at_mut(r * n);
                let src = &head[col * n + col + 1..col * n + n];
                let dst = &mut tail[col + 1..n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= m * s;
                }
            }
        }
    }
    Ok(Factorization::Dense { n, lu, ipiv })
}

impl LuFactors {
    pub fn n(&self) -> usize {
        match &self.fac {
            Factorization::Banded { n, .. } | Factorization::Dense { n, .. } => *n,
        }
    }

    /// Solves A x = b using the stored factorization.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: b.len(),
            });
        }
        let mut x = b.to_vec();
        match &self.fac {
            Factorization::Banded {
                n,
                kl,
                ku,
                ab,
                ipiv,
            } => {
                let (n, kl, ku) = (*n, *kl, *ku);
                let ldab = 2 * kl + ku + 1;
                let idx = |i: usize, j: usize| j * ldab + (kl + ku + i - j);
                for col in 0..n {
                    x.swap(col, ipiv[col]);
                    let last = (col + kl).min(n - 1);
                    let xc = x[col];
                    if xc != 0.0 {
                        for r in (col + 1)..=last {
                            x[r] -= ab[idx(r, col)] * xc;
                        }
                    }
                }
                for col in (0..n).rev() {
                    let jlast = (col + kl + ku).min(n - 1);
                    let mut s = x[col];
                    for j in (col + 1)..=jlast {
                        s -= ab[idx(col, j)] * x[j];
                    }
                    x[col] = s / ab[idx(col, col)];
                }
            }
            Factorization::Dense { n, lu, ipiv } => {
                let n = *n;
                for col in 0..n {
                    x.swap(col, ipiv[col]);
                    let xc = x[col];
                    if xc != 0.0 {
                        for r in (col + 1)..n {
                            x[r] -= lu[r * n + col] * xc;
                        }
                    }
                }
                for row in (0..n).rev() {
                    let mut s = x[row];
                    for j in (row + 1)..n {
                        s -= lu[row * n + j] * x[j];
                    }
                    x[row] = s / lu[row * n + row];
                }
            }
        }
        Ok(x)
    }
}

// ---------------------------------------------------------------------------
// Dense vector kernels.
// ---------------------------------------------------------------------------

/// Pairwise-summed dot product; reproducible and accurate for long vectors.
pub fn dot(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(pairwise_dot(x, y))
}

fn pairwise_dot(x: &[f64], y: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if x.len() <= BLOCK {
        let mut s = 0.0;
        for (a, b) in x.iter().zip(y) {
            s += a * b;
        }
        s
    } else {
        let mid = x.len() / 2;
        pairwise_dot(&x[..mid], &y[..mid]) + pairwise_dot(&x[mid..], &y[mid..])
    }
}

/// Euclidean norm with pairwise summation.
pub fn norm2(x: &[f64]) -> f64 {
    pairwise_dot(x, x).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: x.len(),
        });
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
    Ok(())
}

/// x *= alpha
pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Infinity norm.
pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}
