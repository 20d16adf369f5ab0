//! Augmented system: principal qubits coupled to damped oscillator modes whose
//! white-noise-driven output realizes a sum of Lorentzian noise spectra.
//!
//! Each mode f contributes `H_a = ω_f a_f†a_f`, a damping channel `L_f = a_f`
//! at rate `γ_f`, and the interaction `i(c_f†Z_f − Z_f†c_f)` with
//! `c_f = −(√γ_f/2) a_f` and the collective coupling `Z_f = √κ_f Σ_θ σ^y_θ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    annihilation, embed_qubit_op_sparse, sigma_y, ComplexMatrix, SparseMatrix, StateVector, I,
};

/// Largest augmented Hilbert-space dimension the builder accepts.
pub const MAX_DIM: usize = 1 << 16;

/// One damped oscillator mode realizing a Lorentzian noise peak.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzianMode {
    pub omega_a: f64,
    pub gamma: f64,
    pub kappa: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_levels() -> usize {
    8
}

impl LorentzianMode {
    pub fn new(omega_a: f64, gamma: f64, kappa: f64, levels: usize) -> Result<Self> {
        let m = Self { omega_a, gamma, kappa, levels };
        m.validate()?;
        Ok(m)
    }

    /// Single-mode environment of the 4-node experiments.
    pub fn primary() -> Self {
        Self { omega_a: 10.0, gamma: 0.6, kappa: 1.0, levels: 8 }
    }

    /// Second peak of the double-Lorentzian environment.
    pub fn secondary() -> Self {
        Self { omega_a: 5.0, gamma: 1.0, kappa: 0.8, levels: 8 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("mode gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("mode kappa must be >= 0, got {}", self.kappa)));
        }
        if !self.omega_a.is_finite() {
            return Err(Error::InvalidArgument("mode omega_a must be finite".into()));
        }
        if self.levels < 2 {
            return Err(Error::InvalidArgument(format!(
                "mode needs at least 2 levels, got {}",
                self.levels
            )));
        }
        Ok(())
    }
}

/// Principal ⊗ ancillary operators. Operators are stored sparse on the full
/// space of dimension `dim_p · dim_a`; modes are ordered left to right inside
/// the ancillary factor.
#[derive(Clone, Debug)]
pub struct AugmentedModel {
    pub n_qubits: usize,
    pub modes: Vec<LorentzianMode>,
    pub dim_p: usize,
    pub dim_a: usize,
    pub h_a: SparseMatrix,
    pub h_pa: SparseMatrix,
    /// (L_f, γ_f) pairs.
    pub jump_ops: Vec<(SparseMatrix, f64)>,
}

impl AugmentedModel {
    pub fn dim(&self) -> usize {
        self.dim_p * self.dim_a
    }

    /// H_a + H_pa, the part of the total Hamiltonian that does not change
    /// between control segments.
    pub fn static_hamiltonian(&self) -> SparseMatrix {
        self.h_a.add(&self.h_pa)
    }

    /// `h_p ⊗ I_a + H_a + H_pa`.
    pub fn total_hamiltonian(&self, h_p: &ComplexMatrix) -> Result<SparseMatrix> {
        Ok(self.lift_principal(h_p)?.add(&self.static_hamiltonian()))
    }

    /// `h_p ⊗ I_a`.
    pub fn lift_principal(&self, h_p: &ComplexMatrix) -> Result<SparseMatrix> {
        if h_p.dim() != self.dim_p {
            return Err(Error::DimensionMismatch(format!(
                "principal operator has dim {}, model expects {}",
                h_p.dim(),
                self.dim_p
            )));
        }
        Ok(SparseMatrix::from_dense(h_p).kron(&SparseMatrix::identity(self.dim_a)))
    }

    /// Ancillary vacuum |0…0⟩.
    pub fn vacuum(&self) -> StateVector {
        StateVector::basis(self.dim_a, 0)
    }

    /// `|ψ_p⟩ ⊗ |vac⟩`.
    pub fn initial_state(&self, psi_p: &StateVector) -> Result<StateVector> {
        if psi_p.dim() != self.dim_p {
            return Err(Error::DimensionMismatch(format!(
                "principal state has dim {}, model expects {}",
                psi_p.dim(),
                self.dim_p
            )));
        }
        Ok(psi_p.tensor(&self.vacuum()))
    }

    /// `ρ_p ⊗ |vac⟩⟨vac|`.
    pub fn initial_density(&self, rho_p: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho_p.dim() != self.dim_p {
            return Err(Error::DimensionMismatch(format!(
                "principal state has dim {}, model expects {}",
                rho_p.dim(),
                self.dim_p
            )));
        }
        let (dp, da) = (self.dim_p, self.dim_a);
        let mut out = ComplexMatrix::zeros(dp * da);
        for i in 0..dp {
            for j in 0..dp {
                out[(i * da, j * da)] = rho_p[(i, j)];
            }
        }
        Ok(out)
    }

    /// Fock occupation of `mode` in the ancillary basis index `k`.
    fn occupation(&self, mode: usize, k: usize) -> usize {
        let stride: usize = self.modes[mode + 1..].iter().map(|m| m.levels).product();
        (k / stride) % self.modes[mode].levels
    }

    /// Population of the highest retained Fock level of each mode, given the
    /// diagonal of a full-space state. Values approaching 1e-3 indicate the
    /// truncation is too tight.
    pub fn top_level_populations(&self, diagonal: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.modes.len()];
        for (idx, p) in diagonal.iter().enumerate() {
            let k = idx % self.dim_a;
            for (f, m) in self.modes.iter().enumerate() {
                if self.occupation(f, k) == m.levels - 1 {
                    out[f] += p;
                }
            }
        }
        out
    }

    /// Same model with every damping rate multiplied by `factor`; a large
    /// factor flattens the spectrum toward the memoryless limit.
    pub fn with_gamma_scaled(&self, factor: f64) -> Result<Self> {
        let modes: Vec<LorentzianMode> = self
            .modes
            .iter()
            .map(|m| LorentzianMode { gamma: m.gamma * factor, ..*m })
            .collect();
        build_augmented_model(self.n_qubits, &modes)
    }
}

pub fn build_augmented_model(n_qubits: usize, modes: &[LorentzianMode]) -> Result<AugmentedModel> {
    if !(1..=12).contains(&n_qubits) {
        return Err(Error::InvalidArgument(format!("n_qubits must be in 1..=12, got {n_qubits}")));
    }
    if modes.is_empty() {
        return Err(Error::InvalidArgument("at least one ancillary mode is required".into()));
    }
    for m in modes {
        m.validate()?;
    }
    let dim_p = 1usize << n_qubits;
    let dim_a = modes
        .iter()
        .try_fold(1usize, |acc, m| acc.checked_mul(m.levels))
        .ok_or(Error::DimensionOverflow(usize::MAX))?;
    let dim = dim_p.checked_mul(dim_a).ok_or(Error::DimensionOverflow(usize::MAX))?;
    if dim > MAX_DIM {
        return Err(Error::DimensionOverflow(dim));
    }

    let id_p = SparseMatrix::identity(dim_p);
    let mut y_sum = SparseMatrix::zeros(dim_p);
    for q in 1..=n_qubits {
        y_sum = y_sum.add(&embed_qubit_op_sparse(&sigma_y(), q, n_qubits)?);
    }

    let mut h_a = SparseMatrix::zeros(dim);
    let mut h_pa = SparseMatrix::zeros(dim);
    let mut jump_ops = Vec::with_capacity(modes.len());
    for (f, m) in modes.iter().enumerate() {
        let left: usize = modes[..f].iter().map(|m| m.levels).product();
        let right: usize = modes[f + 1..].iter().map(|m| m.levels).product();
        let a_local = SparseMatrix::identity(left)
            .kron(&SparseMatrix::from_dense(&annihilation(m.levels)?))
            .kron(&SparseMatrix::identity(right));
        let a_full = id_p.kron(&a_local);
        let number = a_full.adjoint().matmul(&a_full);
        h_a = h_a.linear_combination(&number, Complex64::new(m.omega_a, 0.0));

        // i(c†Z − Z†c) with c = −(√γ/2)a, Z = √κ ΣY reduces to
        // (√(γκ)/2) ΣY ⊗ i(a − a†).
        let g = (m.gamma * m.kappa).sqrt() / 2.0;
        if g > 0.0 {
            let quad = a_local.linear_combination(&a_local.adjoint(), Complex64::new(-1.0, 0.0));
            let term = y_sum.kron(&quad).scaled(I * g);
            h_pa = h_pa.add(&term);
        }
        jump_ops.push((a_full, m.gamma));
    }

    Ok(AugmentedModel { n_qubits, modes: modes.to_vec(), dim_p, dim_a, h_a, h_pa, jump_ops })
}

/// S(ω) = Σ_f κ_f (γ_f²/4) / (γ_f²/4 + (ω − ω_f)²).
pub fn spectrum_value(modes: &[LorentzianMode], omega: f64) -> f64 {
    modes.iter().map(|m| m.kappa * lorentzian(m, omega)).sum()
}

/// |Γ(−iω)|² of a single mode's input-output transfer function.
pub fn transfer_function_gain(mode: &LorentzianMode, omega: f64) -> f64 {
    // Γ(s) = −K(s + iω_a + γ/2)⁻¹N with K = −√γ/2, N = √γ.
    let k = -mode.gamma.sqrt() / 2.0;
    let n = mode.gamma.sqrt();
    let s = Complex64::new(0.0, -omega);
    let gain = -k * n / (s + Complex64::new(mode.gamma / 2.0, mode.omega_a));
    gain.norm_sqr()
}

fn lorentzian(m: &LorentzianMode, omega: f64) -> f64 {
    let hw2 = m.gamma * m.gamma / 4.0;
    hw2 / (hw2 + (omega - m.omega_a).powi(2))
}
