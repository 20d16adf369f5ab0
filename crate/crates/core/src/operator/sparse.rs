use num_complex::Complex64;

use super::{ComplexMatrix, StateVector, ZERO};

/// Compressed-sparse-row square matrix.
///
/// Operators on the augmented space (qubits ⊗ oscillator modes) have a
/// handful of nonzeros per row, so the solvers apply them in this form.
/// Dense [`ComplexMatrix`] stays the public currency for small operators.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![Complex64::new(1.0, 0.0); dim])
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let dim = diag.len();
        let mut out = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            if d != ZERO {
                out.cols.push(i);
                out.vals.push(d);
            }
            out.row_ptr[i + 1] = out.cols.len();
        }
        out
    }

    pub fn from_dense(m: &ComplexMatrix) -> Self {
        let dim = m.dim();
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != ZERO {
                    out.cols.push(j);
                    out.vals.push(v);
                }
            }
            out.row_ptr[i + 1] = out.cols.len();
        }
        out
    }

    /// Builds from (row, col, value) triplets; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut out = Self::zeros(dim);
        let mut iter = triplets.into_iter().peekable();
        for row in 0..dim {
            while let Some(&(r, c, _)) = iter.peek() {
                if r != row {
                    break;
                }
                let mut v = ZERO;
                while let Some(&(r2, c2, v2)) = iter.peek() {
                    if r2 == r && c2 == c {
                        v += v2;
                        iter.next();
                    } else {
                        break;
                    }
                }
                if v != ZERO {
                    out.cols.push(c);
                    out.vals.push(v);
                }
            }
            out.row_ptr[row + 1] = out.cols.len();
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[s..e].iter().copied().zip(self.vals[s..e].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(self.dim);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn kron(&self, other: &Self) -> Self {
        let dim = self.dim * other.dim;
        let mut out = Self::zeros(dim);
        out.cols.reserve(self.nnz() * other.nnz());
        out.vals.reserve(self.nnz() * other.nnz());
        for i in 0..self.dim {
            for k in 0..other.dim {
                for (j, a) in self.row(i) {
                    for (l, b) in other.row(k) {
                        out.cols.push(j * other.dim + l);
                        out.vals.push(a * b);
                    }
                }
                out.row_ptr[i * other.dim + k + 1] = out.cols.len();
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.linear_combination(other, Complex64::new(1.0, 0.0))
    }

    /// self + s·other
    pub fn linear_combination(&self, other: &Self, s: Complex64) -> Self {
        assert_eq!(self.dim, other.dim);
        let trip = self
            .triplets()
            .chain(other.triplets().map(|(i, j, v)| (i, j, v * s)))
            .collect();
        Self::from_triplets(self.dim, trip)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn adjoint(&self) -> Self {
        let trip = self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect();
        Self::from_triplets(self.dim, trip)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut trip = Vec::new();
        for i in 0..self.dim {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    trip.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.dim, trip)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let adj = self.adjoint();
        let diff = self.linear_combination(&adj, Complex64::new(-1.0, 0.0));
        diff.vals.iter().all(|v| v.norm() < tol)
    }

    /// Induced 1-norm (max column sum).
    pub fn norm_1(&self) -> f64 {
        let mut col = vec![0.0; self.dim];
        for (_, j, v) in self.triplets() {
            col[j] += v.norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        let mut out = StateVector::zeros(self.dim);
        self.mul_vec_into(v.as_slice(), out.as_mut_slice());
        out
    }

    /// out = self · x
    pub fn mul_vec_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = ZERO;
            for (c, v) in self.cols[s..e].iter().zip(&self.vals[s..e]) {
                acc += v * x[*c];
            }
            *o = acc;
        }
    }

    /// ⟨x| self |x⟩
    pub fn expectation(&self, x: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for (i, xi) in x.iter().enumerate() {
            let mut row = ZERO;
            for (c, v) in self.row(i) {
                row += v * x[c];
            }
            acc += xi.conj() * row;
        }
        acc
    }

    /// out += alpha · self · X for a row-major dense X of the same dimension.
    pub fn gemm_acc(&self, alpha: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        debug_assert_eq!(x.len(), n * n);
        debug_assert_eq!(out.len(), n * n);
        for i in 0..n {
            let out_row = &mut out[i * n..(i + 1) * n];
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for (c, v) in self.cols[s..e].iter().zip(&self.vals[s..e]) {
                let a = alpha * v;
                let x_row = &x[c * n..(c + 1) * n];
                axpy(a, x_row, out_row);
            }
        }
    }

    /// out += alpha · X · self† for a row-major dense X.
    pub fn gemm_adjoint_right_acc(&self, alpha: Complex64, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        debug_assert_eq!(x.len(), n * n);
        // (X S†)[i, j] = Σ_k X[i, k] conj(S[j, k])
        for i in 0..n {
            let x_row = &x[i * n..(i + 1) * n];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (j, o) in out_row.iter_mut().enumerate() {
                let (s, e) = (self.row_ptr[j], self.row_ptr[j + 1]);
                let mut acc = ZERO;
                for (c, v) in self.cols[s..e].iter().zip(&self.vals[s..e]) {
                    acc += x_row[*c] * v.conj();
                }
                *o += alpha * acc;
            }
        }
    }
}

/// y += a·x, written on the interleaved real/imaginary parts so the compiler
/// can vectorize it.
#[inline]
pub(crate) fn axpy(a: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    let (ar, ai) = (a.re, a.im);
    for (yv, xv) in y.iter_mut().zip(x) {
        let (xr, xi) = (xv.re, xv.im);
        yv.re += ar * xr - ai * xi;
        yv.im += ar * xi + ai * xr;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{annihilation, kron, sigma_x, sigma_y, I, ONE};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn round_trip_dense() {
        let m = kron(&sigma_x(), &sigma_y());
        let s = SparseMatrix::from_dense(&m);
        assert_eq!(s.nnz(), 4);
        assert_eq!(s.to_dense(), m);
    }

    #[test]
    fn kron_matches_dense() {
        let a = annihilation(3).unwrap();
        let s = SparseMatrix::from_dense(&sigma_y()).kron(&SparseMatrix::from_dense(&a));
        assert_eq!(s.to_dense(), kron(&sigma_y(), &a));
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let s = SparseMatrix::from_triplets(
            2,
            vec![(0, 1, ONE), (0, 1, ONE), (1, 0, ONE), (1, 0, -ONE)],
        );
        assert_eq!(s.nnz(), 1);
        assert_eq!(s.to_dense()[(0, 1)], c(2.0, 0.0));
    }

    #[test]
    fn gemm_matches_dense_products() {
        let a = kron(&sigma_y(), &annihilation(3).unwrap());
        let s = SparseMatrix::from_dense(&a);
        let x = ComplexMatrix::from_fn(6, |i, j| c(i as f64 - j as f64 * 0.3, 0.1 * (i * j) as f64));
        let mut out = vec![ZERO; 36];
        s.gemm_acc(I, x.as_slice(), &mut out);
        let expected = (&a * &x).scaled(I);
        let got = ComplexMatrix::from_vec(6, out).unwrap();
        assert!(got.max_abs_diff(&expected) < 1e-12);

        let mut out = vec![ZERO; 36];
        s.gemm_adjoint_right_acc(ONE, x.as_slice(), &mut out);
        let expected = &x * &a.adjoint();
        let got = ComplexMatrix::from_vec(6, out).unwrap();
        assert!(got.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn adjoint_and_matmul() {
        let a = SparseMatrix::from_dense(&annihilation(4).unwrap());
        let n = a.adjoint().matmul(&a);
        let dense = n.to_dense();
        for k in 0..4 {
            assert!((dense[(k, k)].re - k as f64).abs() < 1e-12);
        }
        assert!(n.is_hermitian(1e-12));
        assert!(!a.is_hermitian(1e-12));
    }
}
