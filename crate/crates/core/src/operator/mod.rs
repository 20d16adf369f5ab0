//! Dense complex linear algebra and the quantum-operator constructors shared
//! by every other module.
//!
//! Tensor products are always ordered principal ⊗ ancillary, and qubit 1 is
//! the leftmost (slowest-varying) factor, so the ket |0011⟩ puts qubits 1 and
//! 2 in |0⟩. Frequencies are in GHz and durations in ns with ħ = 1.

mod dense;
mod expm;
mod sparse;

pub use dense::{ComplexMatrix, StateVector};
pub use expm::expm_propagator;
pub use sparse::SparseMatrix;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Default tolerance used when a matrix is required to be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim)
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[[ZERO, ONE], [ONE, ZERO]])
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[[ZERO, -I], [I, ZERO]])
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[[ONE, ZERO], [ZERO, -ONE]])
}

/// Kronecker product with `a` as the slow (outer) index.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (da, db) = (a.dim(), b.dim());
    let dim = da * db;
    let mut out = ComplexMatrix::zeros(dim);
    for i in 0..da {
        for j in 0..da {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..db {
                let row = i * db + k;
                for l in 0..db {
                    out[(row, j * db + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Places a single-qubit operator on qubit `index` (1-based, leftmost = 1)
/// of an `n_qubits` register.
pub fn embed_qubit_op(op: &ComplexMatrix, index: usize, n_qubits: usize) -> Result<ComplexMatrix> {
    Ok(embed_qubit_op_sparse(op, index, n_qubits)?.to_dense())
}

pub(crate) fn embed_qubit_op_sparse(
    op: &ComplexMatrix,
    index: usize,
    n_qubits: usize,
) -> Result<SparseMatrix> {
    if op.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "qubit operator must be 2x2, got {}x{}",
            op.dim(),
            op.dim()
        )));
    }
    if index == 0 || index > n_qubits {
        return Err(Error::IndexOutOfRange { index, max: n_qubits });
    }
    let left = SparseMatrix::identity(1 << (index - 1));
    let right = SparseMatrix::identity(1 << (n_qubits - index));
    Ok(left.kron(&SparseMatrix::from_dense(op)).kron(&right))
}

/// Truncated bosonic annihilation operator: `A[k-1, k] = sqrt(k)`.
pub fn annihilation(levels: usize) -> Result<ComplexMatrix> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!(
            "oscillator truncation needs at least 2 levels, got {levels}"
        )));
    }
    let mut a = ComplexMatrix::zeros(levels);
    for k in 1..levels {
        a[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    Ok(a)
}

/// Traces out the ancillary factor of a principal ⊗ ancillary operator.
pub fn partial_trace_ancilla(rho: &ComplexMatrix, dim_p: usize, dim_a: usize) -> Result<ComplexMatrix> {
    if dim_p == 0 || dim_a == 0 || rho.dim() != dim_p * dim_a {
        return Err(Error::DimensionMismatch(format!(
            "operator of dim {} cannot be split as {dim_p} x {dim_a}",
            rho.dim()
        )));
    }
    let mut out = ComplexMatrix::zeros(dim_p);
    for i in 0..dim_p {
        for j in 0..dim_p {
            let mut acc = ZERO;
            for a in 0..dim_a {
                acc += rho[(i * dim_a + a, j * dim_a + a)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Trace distance ½ Σ|λ| of the Hermitian difference `rho1 - rho2`.
pub fn trace_distance(rho1: &ComplexMatrix, rho2: &ComplexMatrix) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "trace distance between dims {} and {}",
            rho1.dim(),
            rho2.dim()
        )));
    }
    for rho in [rho1, rho2] {
        let dev = rho.hermitian_deviation();
        if dev > 1e-8 {
            return Err(Error::NotHermitian(dev));
        }
    }
    let diff = rho1 - rho2;
    let evals = diff.hermitian_eigenvalues()?;
    Ok(0.5 * evals.iter().map(|l| l.abs()).sum::<f64>())
}

/// Purity tr(ρ²) of a Hermitian matrix.
pub fn purity(rho: &ComplexMatrix) -> f64 {
    // tr(ρ²) = Σ_ij ρ_ij ρ_ji = Σ_ij |ρ_ij|² for Hermitian ρ
    rho.as_slice().iter().map(|z| z.norm_sqr()).sum()
}

/// Real expectation tr(H ρ); H is assumed Hermitian.
pub fn expectation(h: &ComplexMatrix, rho: &ComplexMatrix) -> f64 {
    h.trace_product(rho).re
}
