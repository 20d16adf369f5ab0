//! Fixed-step RK4 integration of the Lindblad master equation under
//! piecewise-constant control.
//!
//! The generator is evaluated as `W + W†` with
//! `W = −i H_eff ρ + ½ Σ_f γ_f L_f ρ L_f†` and `H_eff = H − (i/2) Σ_f γ_f L_f†L_f`,
//! which equals `−i[H, ρ] + Σ_f γ_f (L_f ρ L_f† − ½{L_f†L_f, ρ})` for Hermitian
//! ρ and keeps every stage exactly Hermitian.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::augmented::AugmentedModel;
use crate::error::{Error, Result};
use crate::operator::{
    embed_qubit_op, expm_propagator, partial_trace_ancilla, sigma_y, ComplexMatrix, SparseMatrix,
    StateVector, I, ONE,
};
use crate::schedule::{ControlSchedule, Segment};

mod kernel;

use kernel::{Rk4, SplitCsr, SplitGenerator, SplitMat};

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
}

pub fn default_dt() -> f64 {
    DEFAULT_DT
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { dt: DEFAULT_DT }
    }
}

impl SolverConfig {
    pub fn new(dt: f64) -> Result<Self> {
        let cfg = Self { dt };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Dense reference form of the generator.
pub fn lindblad_rhs(
    rho: &ComplexMatrix,
    h_total: &ComplexMatrix,
    jumps: &[(ComplexMatrix, f64)],
) -> Result<ComplexMatrix> {
    let n = rho.dim();
    if h_total.dim() != n || jumps.iter().any(|(l, _)| l.dim() != n) {
        return Err(Error::DimensionMismatch("generator operands must share a dimension".into()));
    }
    let comm = &(h_total * rho) - &(rho * h_total);
    let mut out = comm.scaled(-I);
    for (l, gamma) in jumps {
        let ld = l.adjoint();
        let ldl = &ld * l;
        let mut d = &(&(l * rho) * &ld) - &(&(&ldl * rho) + &(rho * &ldl)).scaled(Complex64::new(0.5, 0.0));
        d = d.scaled(Complex64::new(*gamma, 0.0));
        out.add_scaled_mut(&d, ONE);
    }
    Ok(out)
}

/// Time-independent part of an open system: everything except the principal
/// control Hamiltonian.
#[derive(Clone, Debug)]
pub struct OpenSystem {
    pub dim_p: usize,
    pub dim_a: usize,
    pub static_h: SparseMatrix,
    pub jumps: Vec<(SparseMatrix, f64)>,
}

impl OpenSystem {
    pub fn from_model(model: &AugmentedModel) -> Self {
        Self {
            dim_p: model.dim_p,
            dim_a: model.dim_a,
            static_h: model.static_hamiltonian(),
            jumps: model.jump_ops.clone(),
        }
    }

    /// Principal system alone with the given dissipative channels.
    pub fn markovian(dim_p: usize, rates: &[(ComplexMatrix, f64)]) -> Result<Self> {
        let mut jumps = Vec::with_capacity(rates.len());
        for (l, g) in rates {
            if l.dim() != dim_p {
                return Err(Error::DimensionMismatch(format!(
                    "jump operator has dim {}, expected {dim_p}",
                    l.dim()
                )));
            }
            if !(*g >= 0.0) {
                return Err(Error::InvalidArgument(format!("rate must be >= 0, got {g}")));
            }
            jumps.push((SparseMatrix::from_dense(l), *g));
        }
        Ok(Self { dim_p, dim_a: 1, static_h: SparseMatrix::zeros(dim_p), jumps })
    }

    pub fn closed(dim_p: usize) -> Self {
        Self { dim_p, dim_a: 1, static_h: SparseMatrix::zeros(dim_p), jumps: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim_p * self.dim_a
    }

    pub(crate) fn lift(&self, h_p: &ComplexMatrix) -> Result<SparseMatrix> {
        if h_p.dim() != self.dim_p {
            return Err(Error::DimensionMismatch(format!(
                "principal operator has dim {}, system expects {}",
                h_p.dim(),
                self.dim_p
            )));
        }
        Ok(SparseMatrix::from_dense(h_p).kron(&SparseMatrix::identity(self.dim_a)))
    }

    /// `H_eff = h_p ⊗ I + H_static − (i/2) Σ γ L†L`.
    pub(crate) fn effective_hamiltonian(&self, h_p: &ComplexMatrix) -> Result<SparseMatrix> {
        let mut h = self.lift(h_p)?.add(&self.static_h);
        for (l, g) in &self.jumps {
            h = h.linear_combination(&l.adjoint().matmul(l), Complex64::new(0.0, -0.5 * g));
        }
        Ok(h)
    }

    /// Bytes of dense state the master-equation integrator holds at once.
    pub fn master_memory_estimate(&self) -> usize {
        let d = self.dim();
        RK4_BUFFERS * d * d * std::mem::size_of::<Complex64>()
    }
}

/// Per-step buffers: state, accumulator, stage input, stage derivative and
/// the jump scratch.
const RK4_BUFFERS: usize = 5;

fn generator(system: &OpenSystem, h_p: &ComplexMatrix) -> Result<SplitGenerator> {
    let jumps = system
        .jumps
        .iter()
        .filter(|(_, g)| *g > 0.0)
        .map(|(l, g)| SplitCsr::from_sparse(l, Complex64::new(g.sqrt(), 0.0)))
        .collect();
    Ok(SplitGenerator {
        minus_i_heff: SplitCsr::from_sparse(&system.effective_hamiltonian(h_p)?, -I),
        jumps,
    })
}

/// Integrates one constant-Hamiltonian segment of the augmented model.
pub fn evolve_segment(
    rho: &ComplexMatrix,
    h_p: &ComplexMatrix,
    model: &AugmentedModel,
    duration: f64,
    cfg: &SolverConfig,
) -> Result<ComplexMatrix> {
    cfg.validate()?;
    if !(duration >= 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be >= 0, got {duration}")));
    }
    let system = OpenSystem::from_model(model);
    check_dim(rho, system.dim())?;
    if duration == 0.0 {
        return Ok(rho.clone());
    }
    let g = generator(&system, h_p)?;
    let mut y = SplitMat::from_complex(system.dim(), rho.as_slice());
    Rk4::new(system.dim()).advance(&g, &mut y, duration, cfg.dt);
    ComplexMatrix::from_vec(system.dim(), y.to_complex())
}

/// Alternates `h` for ζ_j and `h_mix` for β_j; returns the final augmented
/// state and its principal reduction.
pub fn evolve_piecewise(
    rho0: &ComplexMatrix,
    schedule: &ControlSchedule,
    h: &ComplexMatrix,
    h_mix: &ComplexMatrix,
    model: &AugmentedModel,
    cfg: &SolverConfig,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let system = OpenSystem::from_model(model);
    let rho = evolve_system(&system, rho0, schedule, h, h_mix, cfg)?;
    let rho_p = partial_trace_ancilla(&rho, system.dim_p, system.dim_a)?;
    Ok((rho, rho_p))
}

/// Piecewise evolution of the principal system alone under memoryless
/// dissipation.
pub fn evolve_markovian(
    rho_p0: &ComplexMatrix,
    schedule: &ControlSchedule,
    h: &ComplexMatrix,
    h_mix: &ComplexMatrix,
    rates: &[(ComplexMatrix, f64)],
    cfg: &SolverConfig,
) -> Result<ComplexMatrix> {
    let system = OpenSystem::markovian(h.dim(), rates)?;
    evolve_system(&system, rho_p0, schedule, h, h_mix, cfg)
}

/// σ^y on every qubit at a common rate.
pub fn sigma_y_channels(n_qubits: usize, rate: f64) -> Result<Vec<(ComplexMatrix, f64)>> {
    (1..=n_qubits)
        .map(|q| Ok((embed_qubit_op(&sigma_y(), q, n_qubits)?, rate)))
        .collect()
}

pub fn evolve_system(
    system: &OpenSystem,
    rho0: &ComplexMatrix,
    schedule: &ControlSchedule,
    h: &ComplexMatrix,
    h_mix: &ComplexMatrix,
    cfg: &SolverConfig,
) -> Result<ComplexMatrix> {
    evolve_system_sampled(system, rho0, schedule, h, h_mix, cfg, None)
}

/// Sampling interval and callback receiving `(t, ρ(t))`.
pub type Sampler<'a> = (f64, &'a mut dyn FnMut(f64, &ComplexMatrix) -> Result<()>);

/// Like [`evolve_system`], additionally calling `sample(t, ρ)` at
/// `t = 0, grid_dt, 2·grid_dt, …` and at the final time.
pub fn evolve_system_sampled(
    system: &OpenSystem,
    rho0: &ComplexMatrix,
    schedule: &ControlSchedule,
    h: &ComplexMatrix,
    h_mix: &ComplexMatrix,
    cfg: &SolverConfig,
    mut sampler: Option<Sampler<'_>>,
) -> Result<ComplexMatrix> {
    cfg.validate()?;
    if schedule.is_empty() {
        return Err(Error::EmptySchedule);
    }
    check_dim(rho0, system.dim())?;
    if let Some((grid_dt, _)) = &sampler {
        if !(*grid_dt > 0.0) {
            return Err(Error::InvalidArgument(format!("grid_dt must be > 0, got {grid_dt}")));
        }
    }
    let n = system.dim();
    let total = schedule.total_duration();
    let tol = 1e-9 * total.max(1.0);
    let grid = sampler.as_ref().map(|(g, _)| sample_times(*g, total, tol));
    let mut next_sample = 0usize;

    let mut y = SplitMat::from_complex(n, rho0.as_slice());
    let mut rk = Rk4::new(n);
    let mut emit = |t: f64, y: &SplitMat, next: &mut usize| -> Result<()> {
        if let (Some((_, f)), Some(times)) = (sampler.as_mut(), grid.as_ref()) {
            while *next < times.len() && times[*next] <= t + tol {
                let m = ComplexMatrix::from_vec(n, y.to_complex())?;
                f(times[*next], &m)?;
                *next += 1;
            }
        }
        Ok(())
    };
    emit(0.0, &y, &mut next_sample)?;

    let mut t = 0.0;
    for (kind, duration) in schedule.segments() {
        if duration == 0.0 {
            continue;
        }
        let g = generator(system, if kind == Segment::Cost { h } else { h_mix })?;
        let end = t + duration;
        while t < end - tol {
            let stop = match grid.as_ref().and_then(|ts| ts.get(next_sample)) {
                Some(&ts) if ts < end - tol => ts,
                _ => end,
            };
            rk.advance(&g, &mut y, stop - t, cfg.dt);
            t = stop;
            emit(t, &y, &mut next_sample)?;
        }
        t = end;
    }
    emit(f64::INFINITY, &y, &mut next_sample)?;
    if !y.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "integration diverged; reduce dt (currently {})",
            cfg.dt
        )));
    }
    ComplexMatrix::from_vec(n, y.to_complex())
}

fn sample_times(grid_dt: f64, total: f64, tol: f64) -> Vec<f64> {
    let k_max = ((total + tol) / grid_dt).floor() as usize;
    let mut times: Vec<f64> = (0..=k_max).map(|k| k as f64 * grid_dt).collect();
    if total - times[k_max] > tol {
        times.push(total);
    }
    times
}

fn check_dim(rho: &ComplexMatrix, dim: usize) -> Result<()> {
    if rho.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "state has dim {}, system expects {dim}",
            rho.dim()
        )));
    }
    Ok(())
}

/// Closed-system reference: ∏_j e^{−iH'β_j} e^{−iHζ_j} |ψ0⟩.
pub fn unitary_piecewise(
    psi0: &StateVector,
    schedule: &ControlSchedule,
    h: &ComplexMatrix,
    h_mix: &ComplexMatrix,
) -> Result<StateVector> {
    if psi0.dim() != h.dim() || h.dim() != h_mix.dim() {
        return Err(Error::DimensionMismatch("state and Hamiltonians must share a dimension".into()));
    }
    let mut psi = psi0.clone();
    for (kind, duration) in schedule.segments() {
        let op = if kind == Segment::Cost { h } else { h_mix };
        psi = expm_propagator(op, duration).apply(&psi);
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augmented::{build_augmented_model, LorentzianMode};
    use crate::maxcut::{build_cost_hamiltonian, build_mixer, WeightedGraph};
    use crate::operator::{sigma_x, sigma_z, trace_distance, ZERO};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small_model(kappa: f64) -> AugmentedModel {
        build_augmented_model(2, &[LorentzianMode::new(3.0, 0.6, kappa, 4).unwrap()]).unwrap()
    }

    fn two_qubit_problem() -> (ComplexMatrix, ComplexMatrix) {
        let g = WeightedGraph::new(2, vec![(1, 2, 0.7)]).unwrap();
        (build_cost_hamiltonian(&g).unwrap(), build_mixer(2).unwrap())
    }

    #[test]
    fn pure_decay_generator() {
        let sm = ComplexMatrix::from_rows(&[[ZERO, ONE], [ZERO, ZERO]]);
        let rho = StateVector::basis(2, 1).outer();
        let out = lindblad_rhs(&rho, &ComplexMatrix::zeros(2), &[(sm, 1.0)]).unwrap();
        let expected = ComplexMatrix::from_real_diagonal(&[1.0, -1.0]);
        assert!(out.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn precession_generator() {
        let plus = StateVector::uniform_superposition(1).outer();
        let out = lindblad_rhs(&plus, &sigma_z(), &[(sigma_x(), 0.0)]).unwrap();
        // −i[σz, ρ]: off-diagonals ∓i
        assert!((out[(0, 1)] - c(0.0, -1.0)).norm() < 1e-15);
        assert!((out[(1, 0)] - c(0.0, 1.0)).norm() < 1e-15);
        assert!(out[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn sparse_generator_matches_dense_reference() {
        let model = small_model(1.0);
        let system = OpenSystem::from_model(&model);
        let (h, _) = two_qubit_problem();
        let n = system.dim();
        let psi = StateVector::from_vec((0..n).map(|k| c((k as f64).sin(), (0.3 * k as f64).cos())).collect());
        let mut psi = psi;
        psi.normalize();
        let rho = psi.outer();
        let g = generator(&system, &h).unwrap();
        let mut out = SplitMat::zeros(n);
        let mut scratch = SplitMat::zeros(n);
        kernel::rhs(&g, &SplitMat::from_complex(n, rho.as_slice()), &mut out, &mut scratch);
        let fast = ComplexMatrix::from_vec(n, out.to_complex()).unwrap();

        let h_total = model.total_hamiltonian(&h).unwrap().to_dense();
        let jumps: Vec<_> = model.jump_ops.iter().map(|(l, g)| (l.to_dense(), *g)).collect();
        let slow = lindblad_rhs(&rho, &h_total, &jumps).unwrap();
        assert!(fast.max_abs_diff(&slow) < 1e-12);
        assert!(slow.trace().norm() < 1e-10);
    }

    #[test]
    fn general_jump_paths_match_dense_reference() {
        // σ^y has complex single entries; σ^x + σ^z has two entries per row
        let mixed = &embed_qubit_op(&sigma_x(), 1, 2).unwrap() + &embed_qubit_op(&sigma_z(), 1, 2).unwrap();
        let rates = vec![(embed_qubit_op(&sigma_y(), 2, 2).unwrap(), 0.7), (mixed, 0.4)];
        let system = OpenSystem::markovian(4, &rates).unwrap();
        let (h, _) = two_qubit_problem();
        let mut psi = StateVector::from_vec((0..4).map(|k| c(1.0 + k as f64, 0.5 - k as f64)).collect());
        psi.normalize();
        let rho = psi.outer();
        let g = generator(&system, &h).unwrap();
        let mut out = SplitMat::zeros(4);
        let mut scratch = SplitMat::zeros(4);
        kernel::rhs(&g, &SplitMat::from_complex(4, rho.as_slice()), &mut out, &mut scratch);
        let fast = ComplexMatrix::from_vec(4, out.to_complex()).unwrap();
        let slow = lindblad_rhs(&rho, &h, &rates).unwrap();
        assert!(fast.max_abs_diff(&slow) < 1e-13);
    }

    #[test]
    fn zero_duration_is_identity() {
        let model = small_model(1.0);
        let (h, _) = two_qubit_problem();
        let rho = model.initial_density(&StateVector::uniform_superposition(2).outer()).unwrap();
        let out = evolve_segment(&rho, &h, &model, 0.0, &SolverConfig::default()).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn decoupled_segment_is_phase_only() {
        let model = small_model(0.0);
        let (h, _) = two_qubit_problem();
        let plus = StateVector::uniform_superposition(2);
        let rho = model.initial_density(&plus.outer()).unwrap();
        let out = evolve_segment(&rho, &h, &model, 0.8, &SolverConfig::default()).unwrap();
        let rho_p = partial_trace_ancilla(&out, 4, 4).unwrap();
        let expected = expm_propagator(&h, 0.8).apply(&plus).outer();
        assert!(rho_p.max_abs_diff(&expected) < 1e-10);
        for k in 0..4 {
            assert_abs_diff_eq!(rho_p[(k, k)].re, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn closed_limit_matches_unitary_product() {
        let model = small_model(0.0);
        let (h, hm) = two_qubit_problem();
        let plus = StateVector::uniform_superposition(2);
        let schedule = ControlSchedule::from_flat(&[0.7, 0.4, 1.1, 0.25]).unwrap();
        let rho0 = model.initial_density(&plus.outer()).unwrap();
        let (_, rho_p) = evolve_piecewise(&rho0, &schedule, &h, &hm, &model, &SolverConfig::default()).unwrap();
        let psi = unitary_piecewise(&plus, &schedule, &h, &hm).unwrap();
        assert!(trace_distance(&rho_p, &psi.outer()).unwrap() < 1e-8);
    }

    #[test]
    fn all_zero_schedule_leaves_state() {
        let model = small_model(1.0);
        let (h, hm) = two_qubit_problem();
        let plus = StateVector::uniform_superposition(2).outer();
        let rho0 = model.initial_density(&plus).unwrap();
        let schedule = ControlSchedule::uniform(2, 0.0).unwrap();
        let (_, rho_p) = evolve_piecewise(&rho0, &schedule, &h, &hm, &model, &SolverConfig::default()).unwrap();
        assert!(rho_p.max_abs_diff(&plus) < 1e-15);
        let empty = ControlSchedule::new(vec![]).unwrap();
        assert!(matches!(
            evolve_piecewise(&rho0, &empty, &h, &hm, &model, &SolverConfig::default()),
            Err(Error::EmptySchedule)
        ));
    }

    #[test]
    fn trace_hermiticity_and_positivity_preserved() {
        let model = small_model(1.0);
        let (h, hm) = two_qubit_problem();
        let rho0 = model.initial_density(&StateVector::uniform_superposition(2).outer()).unwrap();
        let schedule = ControlSchedule::from_flat(&[1.0, 0.6, 0.9, 1.4]).unwrap();
        let system = OpenSystem::from_model(&model);
        let mut checks = 0;
        let mut f = |_t: f64, rho: &ComplexMatrix| -> Result<()> {
            assert!((rho.trace().re - 1.0).abs() < 1e-8);
            assert!(rho.hermitian_deviation() < 1e-8);
            let rho_p = partial_trace_ancilla(rho, 4, 4)?;
            assert!(rho_p.min_eigenvalue()? > -1e-6);
            checks += 1;
            Ok(())
        };
        evolve_system_sampled(&system, &rho0, &schedule, &h, &hm, &SolverConfig::default(), Some((0.25, &mut f)))
            .unwrap();
        // 0, 0.25, …, 3.75, and the final time 3.9
        assert_eq!(checks, 17);
    }

    #[test]
    fn sampling_does_not_change_result() {
        let model = small_model(1.0);
        let (h, hm) = two_qubit_problem();
        let rho0 = model.initial_density(&StateVector::uniform_superposition(2).outer()).unwrap();
        let schedule = ControlSchedule::from_flat(&[0.5, 0.3]).unwrap();
        let system = OpenSystem::from_model(&model);
        let cfg = SolverConfig::default();
        let plain = evolve_system(&system, &rho0, &schedule, &h, &hm, &cfg).unwrap();
        let mut f = |_: f64, _: &ComplexMatrix| Ok(());
        let sampled =
            evolve_system_sampled(&system, &rho0, &schedule, &h, &hm, &cfg, Some((0.01, &mut f))).unwrap();
        assert!(plain.max_abs_diff(&sampled) < 1e-12);
    }

    #[test]
    fn markovian_without_rates_is_closed() {
        let (h, hm) = two_qubit_problem();
        let plus = StateVector::uniform_superposition(2);
        let schedule = ControlSchedule::from_flat(&[0.6, 0.9]).unwrap();
        let rates = sigma_y_channels(2, 0.0).unwrap();
        let rho = evolve_markovian(&plus.outer(), &schedule, &h, &hm, &rates, &SolverConfig::default()).unwrap();
        let psi = unitary_piecewise(&plus, &schedule, &h, &hm).unwrap();
        assert!(trace_distance(&rho, &psi.outer()).unwrap() < 1e-9);
    }

    #[test]
    fn markovian_purity_decreases() {
        let (h, hm) = two_qubit_problem();
        let plus = StateVector::uniform_superposition(2);
        let schedule = ControlSchedule::from_flat(&[0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        let system = OpenSystem::markovian(4, &sigma_y_channels(2, 1.0).unwrap()).unwrap();
        let mut last = f64::INFINITY;
        let mut f = |_: f64, rho: &ComplexMatrix| {
            let p = crate::operator::purity(rho);
            assert!(p <= last + 1e-12);
            last = p;
            Ok(())
        };
        evolve_system_sampled(&system, &plus.outer(), &schedule, &h, &hm, &SolverConfig::default(), Some((0.1, &mut f)))
            .unwrap();
        assert!(last < 0.5);
    }

    #[test]
    fn step_halving_converges() {
        let model = small_model(1.0);
        let (h, hm) = two_qubit_problem();
        let rho0 = model.initial_density(&StateVector::uniform_superposition(2).outer()).unwrap();
        let schedule = ControlSchedule::from_flat(&[0.8, 0.4]).unwrap();
        let a = evolve_piecewise(&rho0, &schedule, &h, &hm, &model, &SolverConfig::new(2e-3).unwrap()).unwrap().1;
        let b = evolve_piecewise(&rho0, &schedule, &h, &hm, &model, &SolverConfig::new(1e-3).unwrap()).unwrap().1;
        assert!(trace_distance(&a, &b).unwrap() < 1e-8);
    }

    #[test]
    fn memory_estimate_counts_rk4_buffers() {
        let system = OpenSystem::from_model(&small_model(1.0));
        assert_eq!(system.master_memory_estimate(), 5 * 16 * 16 * 16);
    }
}
