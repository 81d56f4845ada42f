//! Compressed sparse row storage and the handful of kernels the operators need.

use crate::real::Real;

/// Square-or-rectangular CSR matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                let l = values.len() - 1;
                values[l] = values[l] + v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, T::one())).collect())
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

    /// Column indices and values of one row.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = Aᵀ x` without forming the transpose.
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] = y[j] + v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (j, i, v)));
        }
        Self::from_triplets(self.ncols, self.nrows, trip)
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut trip = Vec::new();
        let mut acc = vec![T::zero(); other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (c2, v2) = other.row(k);
                for (&j, &b) in c2.iter().zip(v2) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                    acc[j] = acc[j] + a * b;
                }
            }
            for &j in &touched {
                trip.push((i, j, acc[j]));
                acc[j] = T::zero();
                mark[j] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, trip)
    }

    /// Entrywise `self + alpha · other` (sparsity patterns are merged).
    pub fn add_scaled(&self, alpha: T, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut trip = self.triplets();
        trip.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, alpha * v)));
        Self::from_triplets(self.nrows, self.ncols, trip)
    }

    /// `self + diag(d)`.
    pub fn add_diagonal(&self, d: &[T]) -> Self {
        assert_eq!(d.len(), self.nrows);
        let mut trip = self.triplets();
        trip.extend(d.iter().enumerate().map(|(i, &v)| (i, i, v)));
        Self::from_triplets(self.nrows, self.ncols, trip)
    }

    /// `diag(left) · self · diag(right)`.
    pub fn scale(&self, left: &[T], right: &[T]) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.values[p] = left[i] * self.values[p] * right[self.indices[p]];
            }
        }
        out
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
        }
        trip
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.nrows).map(|i| self.row(i).1.iter().copied().sum()).collect()
    }

    /// Largest absolute row sum (the ∞-norm).
    pub fn norm_inf(&self) -> T {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Smallest off-diagonal entry; `None` for a diagonal matrix.
    pub fn min_off_diagonal(&self) -> Option<T> {
        let mut best: Option<T> = None;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    best = Some(best.map_or(v, |b| b.min(v)));
                }
            }
        }
        best
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }
}

/// Incomplete LU factorization with zero fill-in, used as a preconditioner.
#[derive(Clone, Debug)]
pub struct Ilu0<T> {
    lu: CsrMatrix<T>,
    diag_pos: Vec<usize>,
}

impl<T: Real> Ilu0<T> {
    pub fn new(a: &CsrMatrix<T>) -> Self {
        let n = a.nrows;
        let mut lu = a.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for (i, dp) in diag_pos.iter_mut().enumerate() {
            let (cols, _) = lu.row(i);
            if let Ok(p) = cols.binary_search(&i) {
                *dp = lu.indptr[i] + p;
            }
        }
        let mut pos_in_row = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.indptr[i], lu.indptr[i + 1]);
            for p in start..end {
                pos_in_row[lu.indices[p]] = p;
            }
            for p in start..end {
                let k = lu.indices[p];
                if k >= i {
                    break;
                }
                let pivot = if diag_pos[k] == usize::MAX {
                    T::zero()
                } else {
                    lu.values[diag_pos[k]]
                };
                let pivot = if pivot.abs() < T::min_positive_value() {
                    T::one()
                } else {
                    pivot
                };
                let lik = lu.values[p] / pivot;
                lu.values[p] = lik;
                for q in lu.indptr[k]..lu.indptr[k + 1] {
                    let j = lu.indices[q];
                    if j <= k {
                        continue;
                    }
                    let target = pos_in_row[j];
                    if target != usize::MAX && target >= start && target < end {
                        lu.values[target] = lu.values[target] - lik * lu.values[q];
                    }
                }
            }
            for p in start..end {
                pos_in_row[lu.indices[p]] = usize::MAX;
            }
        }
        Self { lu, diag_pos }
    }

    /// Apply the preconditioner: solve `L U z = r`.
    pub fn apply(&self, r: &[T], z: &mut [T]) {
        let n = self.lu.nrows;
        for i in 0..n {
            let mut s = r[i];
            for p in self.lu.indptr[i]..self.lu.indptr[i + 1] {
                let j = self.lu.indices[p];
                if j >= i {
                    break;
                }
                s = s - self.lu.values[p] * z[j];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            let mut diag = T::one();
            for p in self.lu.indptr[i]..self.lu.indptr[i + 1] {
                let j = self.lu.indices[p];
                if j > i {
                    s = s - self.lu.values[p] * z[j];
                } else if j == i {
                    diag = self.lu.values[p];
                }
            }
            if self.diag_pos[i] == usize::MAX || diag.abs() < T::min_positive_value() {
                diag = T::one();
            }
            z[i] = s / diag;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CsrMatrix<f64> {
        CsrMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 0, 4.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 4.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 4.0),
                (2, 2, 0.5),
            ],
        )
    }

    #[test]
    fn duplicates_are_summed() {
        let a = small();
        assert_eq!(a.get(2, 2), 4.5);
        assert_eq!(a.nnz(), 7);
    }

    #[test]
    fn transpose_matches_tr_mul() {
        let a = CsrMatrix::from_triplets(2, 3, vec![(0, 2, 1.5), (1, 0, -2.0), (1, 1, 3.0)]);
        let x = [0.3, -0.7];
        assert_eq!(a.transpose().mul_vec(&x), a.tr_mul_vec(&x));
    }

    #[test]
    fn ilu0_is_exact_for_tridiagonal() {
        let a = small();
        let ilu = Ilu0::new(&a);
        let b = [1.0, 2.0, 3.0];
        let mut z = [0.0; 3];
        ilu.apply(&b, &mut z);
        let back = a.mul_vec(&z);
        for (u, v) in back.iter().zip(b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn matmul_against_dense() {
        let a = small();
        let p = a.matmul(&a.transpose());
        let d = a.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let e: f64 = (0..3).map(|k| d[i][k] * d[j][k]).sum();
                assert!((p.get(i, j) - e).abs() < 1e-14);
            }
        }
    }
}
