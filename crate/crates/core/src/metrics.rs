//! Non-Markovianity of a controlled process: the BLP measure (total increase
//! of the trace distance between two evolving states) and the exploration
//! rate (that increase per unit of time spent increasing).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augmented::{build_augmented_model, LorentzianMode};
use crate::error::{Error, Result};
use crate::lindblad::{evolve_system_sampled, OpenSystem, SolverConfig};
use crate::maxcut::{approximation_ratio, brute_force_extrema, build_cost_hamiltonian, build_mixer, WeightedGraph};
use crate::operator::{partial_trace_ancilla, trace_distance, ComplexMatrix, StateVector};
use crate::optimizer::{optimize, MasterEvaluator, OptimizerConfig};
use crate::schedule::ControlSchedule;

/// Default sampling interval of the distance trace, in ns.
pub const DEFAULT_GRID_DT: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceTrace {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

impl DistanceTrace {
    pub fn new(times: Vec<f64>, distances: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != distances.len() {
            return Err(Error::InvalidArgument("trace needs equally many times and distances".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("trace times must be strictly increasing".into()));
        }
        Ok(Self { times, distances })
    }
}

/// How intervals enter the increase time `T_e`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeConvention {
    /// Only strictly increasing intervals count.
    #[default]
    Strict,
    /// Weight `(1 + sgn ΔD)/2`, so flat intervals count half.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonMarkovReport {
    pub n_phi: f64,
    pub t_e: f64,
    pub sigma_bar: f64,
}

/// Trace distance between the reduced states of `|+⟩^n` and `|−⟩^n` (each
/// with the environment in its ground state) sampled every `grid_dt`.
pub fn distance_trace(
    system: &OpenSystem,
    schedule: &ControlSchedule,
    h: &ComplexMatrix,
    h_mix: &ComplexMatrix,
    grid_dt: f64,
    solver: &SolverConfig,
) -> Result<DistanceTrace> {
    Ok(distance_trace_with_state(system, schedule, h, h_mix, grid_dt, solver)?.0)
}

/// [`distance_trace`] plus the final reduced state of the `|+⟩^n` branch.
pub fn distance_trace_with_state(
    system: &OpenSystem,
    schedule: &ControlSchedule,
    h: &ComplexMatrix,
    h_mix: &ComplexMatrix,
    grid_dt: f64,
    solver: &SolverConfig,
) -> Result<(DistanceTrace, ComplexMatrix)> {
    if !(grid_dt > 0.0 && grid_dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid_dt must be > 0, got {grid_dt}")));
    }
    let n_qubits = system.dim_p.trailing_zeros() as usize;
    if 1usize << n_qubits != system.dim_p {
        return Err(Error::DimensionMismatch("principal space is not a qubit register".into()));
    }
    let vacuum = StateVector::basis(system.dim_a, 0);
    let branch = |psi_p: StateVector| -> Result<(Vec<f64>, Vec<ComplexMatrix>, ComplexMatrix)> {
        let rho0 = psi_p.tensor(&vacuum).outer();
        let (mut times, mut states) = (Vec::new(), Vec::new());
        let mut sample = |t: f64, rho: &ComplexMatrix| -> Result<()> {
            times.push(t);
            states.push(partial_trace_ancilla(rho, system.dim_p, system.dim_a)?);
            Ok(())
        };
        let rho = evolve_system_sampled(system, &rho0, schedule, h, h_mix, solver, Some((grid_dt, &mut sample)))?;
        Ok((times, states, partial_trace_ancilla(&rho, system.dim_p, system.dim_a)?))
    };
    let (plus, minus) = rayon::join(
        || branch(StateVector::uniform_superposition(n_qubits)),
        || branch(StateVector::uniform_minus(n_qubits)),
    );
    let (times, plus_states, final_plus) = plus?;
    let (_, minus_states, _) = minus?;
    let distances = plus_states
        .iter()
        .zip(&minus_states)
        .map(|(a, b)| trace_distance(a, b).map(|d| d.clamp(0.0, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok((DistanceTrace::new(times, distances)?, final_plus))
}

/// 𝒩 = Σ ΔD_i over intervals with ΔD_i > 0.
pub fn blp_measure(trace: &DistanceTrace) -> f64 {
    trace.distances.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).sum::<f64>() + 0.0
}

/// Exploration rate with strictly increasing intervals defining `T_e`.
pub fn exploration_rate(trace: &DistanceTrace) -> NonMarkovReport {
    exploration_rate_with(trace, TeConvention::Strict)
}

pub fn exploration_rate_with(trace: &DistanceTrace, convention: TeConvention) -> NonMarkovReport {
    let n_phi = blp_measure(trace);
    let t_e: f64 = trace
        .distances
        .windows(2)
        .zip(trace.times.windows(2))
        .map(|(d, t)| {
            let delta = d[1] - d[0];
            let weight = if delta > 0.0 {
                1.0
            } else if delta == 0.0 && convention == TeConvention::Literal {
                0.5
            } else {
                0.0
            };
            weight * (t[1] - t[0])
        })
        .sum();
    let sigma_bar = if t_e > 0.0 { n_phi / t_e } else { 0.0 };
    NonMarkovReport { n_phi, t_e, sigma_bar }
}

/// Environment parameter varied by [`sweep_parameter`]; it applies to the
/// first mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    OmegaA,
    Kappa,
    Gamma,
}

impl SweepParam {
    pub fn apply(self, mode: &mut LorentzianMode, value: f64) {
        match self {
            SweepParam::OmegaA => mode.omega_a = value,
            SweepParam::Kappa => mode.kappa = value,
            SweepParam::Gamma => mode.gamma = value,
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega_a" => Ok(SweepParam::OmegaA),
            "kappa" => Ok(SweepParam::Kappa),
            "gamma" => Ok(SweepParam::Gamma),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

/// Fixed inputs of a sweep.
#[derive(Clone, Debug)]
pub struct SweepSetup {
    pub graph: WeightedGraph,
    pub modes: Vec<LorentzianMode>,
    pub schedule: ControlSchedule,
    pub solver: SolverConfig,
    pub grid_dt: f64,
    /// When set, each point is also optimized from `schedule`.
    pub optimizer: Option<OptimizerConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param_value: f64,
    pub n_phi_initial: f64,
    pub n_phi_optimized: Option<f64>,
    pub r_initial: f64,
    pub r_optimized: Option<f64>,
    /// Exploration rate under the initial schedule.
    pub sigma_bar: f64,
}

/// One row per value, in input order, computed on up to `workers` threads.
pub fn sweep_parameter(
    setup: &SweepSetup,
    param: SweepParam,
    values: &[f64],
    workers: usize,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    if setup.modes.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one mode".into()));
    }
    let n = setup.graph.n_nodes;
    let h = build_cost_hamiltonian(&setup.graph)?;
    let h_mix = build_mixer(n)?;
    let ext = brute_force_extrema(&setup.graph)?;
    let point = |&value: &f64| -> Result<SweepPoint> {
        let mut modes = setup.modes.clone();
        param.apply(&mut modes[0], value);
        modes[0].validate()?;
        let system = OpenSystem::from_model(&build_augmented_model(n, &modes)?);
        let (trace, rho_p) = distance_trace_with_state(&system, &setup.schedule, &h, &h_mix, setup.grid_dt, &setup.solver)?;
        let report = exploration_rate(&trace);
        let r_initial = approximation_ratio(&h, &rho_p, &ext)?;
        let (n_phi_optimized, r_optimized) = match &setup.optimizer {
            None => (None, None),
            Some(cfg) => {
                let ev = MasterEvaluator::new(
                    system.clone(),
                    &StateVector::uniform_superposition(n),
                    h.clone(),
                    h_mix.clone(),
                    setup.solver,
                )?;
                let (best, _, rho_best) = optimize(&setup.schedule, cfg, &ev)?;
                let opt_trace = distance_trace(&system, &best, &h, &h_mix, setup.grid_dt, &setup.solver)?;
                (Some(blp_measure(&opt_trace)), Some(approximation_ratio(&h, &rho_best, &ext)?))
            }
        };
        Ok(SweepPoint {
            param_value: value,
            n_phi_initial: report.n_phi,
            n_phi_optimized,
            r_initial,
            r_optimized,
            sigma_bar: report.sigma_bar,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(|| values.par_iter().map(point).collect())
}
