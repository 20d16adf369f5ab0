//! l1-regularized proximal gradient descent over control durations.
//!
//! Minimizes `y(τ) = tr(H ρ_p(τ)) + ξ‖τ‖₁`: a finite-difference gradient step
//! on the energy is followed by the soft-threshold proximal map of the l1
//! term, which drives unneeded durations to exactly zero.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{evolve_system, unitary_piecewise, OpenSystem, SolverConfig};
use crate::operator::{partial_trace_ancilla, ComplexMatrix, StateVector};
use crate::schedule::ControlSchedule;
use crate::trajectory::{run_ensemble, TrajectoryConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub xi: f64,
    pub upsilon: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub max_iters: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { xi: 0.01, upsilon: 0.05, eta: 1e-4, epsilon: 1e-3, max_iters: 200 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str, v: f64| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("optimizer {what} out of range: {v}")))
            }
        };
        check(self.xi >= 0.0 && self.xi.is_finite(), "xi", self.xi)?;
        check(self.upsilon > 0.0 && self.upsilon.is_finite(), "upsilon", self.upsilon)?;
        check(self.eta > 0.0 && self.eta.is_finite(), "eta", self.eta)?;
        check(self.epsilon > 0.0 && self.epsilon.is_finite(), "epsilon", self.epsilon)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub schedule: ControlSchedule,
    pub h: f64,
    pub y: f64,
    pub effective_depth: usize,
    /// Seconds since the optimizer started.
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    /// Iteration 0 is the initial schedule.
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub best_iteration: usize,
}

impl OptimizationTrace {
    /// Number of update steps taken.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

/// An evolution backend mapping a schedule to the final principal state.
pub trait Evaluator: Sync {
    /// Cost Hamiltonian on the principal space.
    fn hamiltonian(&self) -> &ComplexMatrix;

    /// Final reduced state ρ_p(τ).
    fn final_state(&self, schedule: &ControlSchedule) -> Result<ComplexMatrix>;

    /// `h(τ) = tr(H ρ_p(τ))`.
    fn energy(&self, schedule: &ControlSchedule) -> Result<f64> {
        Ok(self.hamiltonian().trace_product(&self.final_state(schedule)?).re)
    }

    /// Whether independent evaluations may run concurrently. Backends that
    /// parallelize internally return false.
    fn concurrent(&self) -> bool {
        true
    }
}

/// Deterministic master-equation backend.
pub struct MasterEvaluator {
    system: OpenSystem,
    rho0: ComplexMatrix,
    h: ComplexMatrix,
    h_mix: ComplexMatrix,
    solver: SolverConfig,
}

impl MasterEvaluator {
    pub fn new(
        system: OpenSystem,
        psi_p0: &StateVector,
        h: ComplexMatrix,
        h_mix: ComplexMatrix,
        solver: SolverConfig,
    ) -> Result<Self> {
        solver.validate()?;
        if psi_p0.dim() != system.dim_p || h.dim() != system.dim_p || h_mix.dim() != system.dim_p {
            return Err(Error::DimensionMismatch("evaluator operands must match the principal space".into()));
        }
        let rho0 = psi_p0.tensor(&StateVector::basis(system.dim_a, 0)).outer();
        Ok(Self { system, rho0, h, h_mix, solver })
    }

    pub fn system(&self) -> &OpenSystem {
        &self.system
    }
}

impl Evaluator for MasterEvaluator {
    fn hamiltonian(&self) -> &ComplexMatrix {
        &self.h
    }

    fn final_state(&self, schedule: &ControlSchedule) -> Result<ComplexMatrix> {
        let rho = evolve_system(&self.system, &self.rho0, schedule, &self.h, &self.h_mix, &self.solver)?;
        partial_trace_ancilla(&rho, self.system.dim_p, self.system.dim_a)
    }
}

/// Trajectory-ensemble backend. Every evaluation uses the configured base
/// seed, so all evaluations share common random numbers.
pub struct TrajectoryEvaluator {
    system: OpenSystem,
    psi_p0: StateVector,
    h: ComplexMatrix,
    h_mix: ComplexMatrix,
    cfg: TrajectoryConfig,
    workers: usize,
}

impl TrajectoryEvaluator {
    pub fn new(
        system: OpenSystem,
        psi_p0: StateVector,
        h: ComplexMatrix,
        h_mix: ComplexMatrix,
        cfg: TrajectoryConfig,
        workers: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        if psi_p0.dim() != system.dim_p || h.dim() != system.dim_p || h_mix.dim() != system.dim_p {
            return Err(Error::DimensionMismatch("evaluator operands must match the principal space".into()));
        }
        Ok(Self { system, psi_p0, h, h_mix, cfg, workers })
    }
}

impl Evaluator for TrajectoryEvaluator {
    fn hamiltonian(&self) -> &ComplexMatrix {
        &self.h
    }

    fn final_state(&self, schedule: &ControlSchedule) -> Result<ComplexMatrix> {
        let res = run_ensemble(&self.system, &self.psi_p0, schedule, &self.h, &self.h_mix, &self.cfg, self.workers)?;
        Ok(res.rho)
    }

    fn concurrent(&self) -> bool {
        false
    }
}

/// Closed-system backend: the exact unitary product.
pub struct ClosedEvaluator {
    psi0: StateVector,
    h: ComplexMatrix,
    h_mix: ComplexMatrix,
}

impl ClosedEvaluator {
    pub fn new(psi0: StateVector, h: ComplexMatrix, h_mix: ComplexMatrix) -> Result<Self> {
        if psi0.dim() != h.dim() || h.dim() != h_mix.dim() {
            return Err(Error::DimensionMismatch("state and Hamiltonians must share a dimension".into()));
        }
        Ok(Self { psi0, h, h_mix })
    }
}

impl Evaluator for ClosedEvaluator {
    fn hamiltonian(&self) -> &ComplexMatrix {
        &self.h
    }

    fn final_state(&self, schedule: &ControlSchedule) -> Result<ComplexMatrix> {
        Ok(unitary_piecewise(&self.psi0, schedule, &self.h, &self.h_mix)?.outer())
    }
}

/// `(h, y)` with `y = h + ξ‖τ‖₁`.
pub fn objective(schedule: &ControlSchedule, evaluator: &dyn Evaluator, xi: f64) -> Result<(f64, f64)> {
    let h = evaluator.energy(schedule)?;
    Ok((h, h + xi * schedule.l1_norm()))
}

/// The l1 proximal map: `d − t` above `t`, `0` within `[−t, t]`, `d + t`
/// below `−t`.
pub fn shrink(d: &[f64], t: f64) -> Vec<f64> {
    d.iter()
        .map(|&v| {
            if v > t {
                v - t
            } else if v < -t {
                v + t
            } else {
                0.0
            }
        })
        .collect()
}

/// [`shrink`] followed by clamping at zero, since durations are nonnegative.
pub fn soft_threshold(d: &[f64], t: f64) -> Vec<f64> {
    shrink(d, t).into_iter().map(|v| v.max(0.0)).collect()
}

/// Central-difference gradient of `h` in the flat layout (ζ_1, β_1, …).
/// Components with `τ_i < ε` use a forward difference.
pub fn finite_diff_gradient(
    schedule: &ControlSchedule,
    evaluator: &dyn Evaluator,
    epsilon: f64,
) -> Result<Vec<f64>> {
    gradient_with_center(schedule, evaluator, epsilon, None)
}

fn gradient_with_center(
    schedule: &ControlSchedule,
    evaluator: &dyn Evaluator,
    epsilon: f64,
    center: Option<f64>,
) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let tau = schedule.to_flat();
    let needs_center = tau.iter().any(|&t| t - epsilon < 0.0);
    let center = match (center, needs_center) {
        (Some(c), _) => Some(c),
        (None, true) => Some(evaluator.energy(schedule)?),
        (None, false) => None,
    };
    let shifted = |i: usize, delta: f64| -> Result<f64> {
        let mut v = tau.clone();
        v[i] += delta;
        evaluator.energy(&ControlSchedule::from_flat(&v)?)
    };
    let component = |i: usize| -> Result<f64> {
        if tau[i] - epsilon < 0.0 {
            Ok((shifted(i, epsilon)? - center.unwrap()) / epsilon)
        } else {
            Ok((shifted(i, epsilon)? - shifted(i, -epsilon)?) / (2.0 * epsilon))
        }
    };
    if evaluator.concurrent() {
        (0..tau.len()).into_par_iter().map(component).collect()
    } else {
        (0..tau.len()).map(component).collect()
    }
}

/// Runs proximal gradient descent from `schedule0` and returns the best
/// schedule seen (by `y`), the trace, and the best schedule's final state.
pub fn optimize(
    schedule0: &ControlSchedule,
    cfg: &OptimizerConfig,
    evaluator: &dyn Evaluator,
) -> Result<(ControlSchedule, OptimizationTrace, ComplexMatrix)> {
    cfg.validate()?;
    if schedule0.is_empty() {
        return Err(Error::EmptySchedule);
    }
    let start = Instant::now();
    let mut trace = OptimizationTrace::default();
    let record = |trace: &mut OptimizationTrace, iteration: usize, tau: &ControlSchedule, h: f64, y: f64| {
        trace.records.push(IterationRecord {
            iteration,
            schedule: tau.clone(),
            h,
            y,
            effective_depth: tau.effective_depth(),
            wall_time: start.elapsed().as_secs_f64(),
        });
    };

    let mut tau = schedule0.clone();
    let (mut h, y) = objective(&tau, evaluator, cfg.xi)?;
    if !(h.is_finite() && y.is_finite()) {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    record(&mut trace, 0, &tau, h, y);
    let (mut best_y, mut best) = (y, tau.clone());

    for k in 1..=cfg.max_iters {
        let grad = gradient_with_center(&tau, evaluator, cfg.epsilon, Some(h))?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteObjective { iteration: k });
        }
        let d: Vec<f64> = tau.to_flat().iter().zip(&grad).map(|(t, g)| t - cfg.upsilon * g).collect();
        let next = ControlSchedule::from_flat(&soft_threshold(&d, cfg.xi * cfg.upsilon))?;
        let (h_next, y_next) = objective(&next, evaluator, cfg.xi)?;
        if !(h_next.is_finite() && y_next.is_finite()) {
            return Err(Error::NonFiniteObjective { iteration: k });
        }
        record(&mut trace, k, &next, h_next, y_next);
        if y_next < best_y {
            best_y = y_next;
            best = next.clone();
            trace.best_iteration = k;
        }
        let delta = (h_next - h).abs();
        tau = next;
        h = h_next;
        if delta < cfg.eta {
            trace.converged = true;
            break;
        }
    }
    let rho_p = evaluator.final_state(&best)?;
    Ok((best, trace, rho_p))
}
