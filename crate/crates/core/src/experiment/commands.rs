//! Batch commands. Each returns structured results plus a [`Table`] view;
//! parallel work is collected in input order, so outputs depend only on the
//! config and seed.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{evolve_system, OpenSystem, SolverConfig};
use crate::maxcut::{
    approximation_ratio, brute_force_extrema, build_cost_hamiltonian, build_mixer, probability_of,
    solution_probabilities, WeightedGraph,
};
use crate::metrics::{distance_trace_with_state, exploration_rate_with, sweep_parameter, SweepSetup};
use crate::operator::{partial_trace_ancilla, trace_distance, ComplexMatrix, StateVector};
use crate::optimizer::{
    optimize, ClosedEvaluator, Evaluator, MasterEvaluator, OptimizationTrace, TrajectoryEvaluator,
};
use crate::rng;
use crate::schedule::ControlSchedule;
use crate::trajectory::{run_ensemble, TrajectoryConfig, TRAJECTORY_BATCH};

use super::alloc;
use super::config::{Environment, ExperimentConfig, SolverSpec};
use super::output::{Cell, Table};

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))
}

/// The evaluator selected by the config for an n-qubit problem.
pub fn build_evaluator(
    cfg: &ExperimentConfig,
    n: usize,
    h: &ComplexMatrix,
    h_mix: &ComplexMatrix,
    workers: usize,
) -> Result<Box<dyn Evaluator>> {
    let psi = StateVector::uniform_superposition(n);
    if cfg.environment == Environment::Closed {
        return Ok(Box::new(ClosedEvaluator::new(psi, h.clone(), h_mix.clone())?));
    }
    let system = cfg.open_system(n)?;
    Ok(match cfg.solver {
        SolverSpec::Master(s) => Box::new(MasterEvaluator::new(system, &psi, h.clone(), h_mix.clone(), s)?),
        SolverSpec::Trajectory(t) => {
            Box::new(TrajectoryEvaluator::new(system, psi, h.clone(), h_mix.clone(), t, workers)?)
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub environment: Environment,
    pub n_nodes: usize,
    pub schedule: ControlSchedule,
    pub effective_depth: usize,
    pub l1_norm: f64,
    pub h: f64,
    pub y: f64,
    pub approximation_ratio: f64,
    pub c_max: f64,
    pub c_min: f64,
    pub optimal_group: Vec<String>,
    pub optimal_group_probability: f64,
    /// Probability of each bitstring merged with its complement.
    pub probabilities: Vec<(String, f64)>,
    pub trace: OptimizationTrace,
}

/// Optimizes from `optimizer.init` and reports the best schedule found.
pub fn cmd_solve(cfg: &ExperimentConfig, workers: usize) -> Result<SolveResult> {
    let graph = cfg.graph.resolve()?;
    let n = graph.n_nodes;
    let ext = brute_force_extrema(&graph)?;
    let h = build_cost_hamiltonian(&graph)?;
    let h_mix = build_mixer(n)?;
    pool(workers)?.install(|| {
        let ev = build_evaluator(cfg, n, &h, &h_mix, workers)?;
        let (best, trace, rho_p) = optimize(&cfg.optimizer.init, &cfg.optimizer.config, ev.as_ref())?;
        let rec = &trace.records[trace.best_iteration];
        Ok(SolveResult {
            environment: cfg.environment,
            n_nodes: n,
            effective_depth: best.effective_depth(),
            l1_norm: best.l1_norm(),
            h: rec.h,
            y: rec.y,
            approximation_ratio: approximation_ratio(&h, &rho_p, &ext)?,
            c_max: ext.c_max,
            c_min: ext.c_min,
            optimal_group_probability: probability_of(&rho_p, &ext.argmin_bitstrings)?,
            optimal_group: ext.argmin_bitstrings.clone(),
            probabilities: solution_probabilities(&rho_p, true),
            schedule: best,
            trace,
        })
    })
}

/// Sweeps the first mode's parameter over `sweep.values` from
/// `optimizer.init`.
pub fn cmd_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<Table> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Error::Config("config has no sweep section".into()))?;
    if cfg.environment != Environment::Augmented {
        return Err(Error::Config("sweeps vary a mode and need the augmented environment".into()));
    }
    let setup = SweepSetup {
        graph: cfg.graph.resolve()?,
        modes: cfg.modes.clone(),
        schedule: cfg.optimizer.init.clone(),
        solver: cfg.metrics_solver()?,
        grid_dt: cfg.metrics.grid_dt,
        optimizer: sweep.optimize.then_some(cfg.optimizer.config),
    };
    let rows = pool(workers)?.install(|| sweep_parameter(&setup, sweep.param, &sweep.values, workers))?;
    let mut t = Table::new(&["param_value", "n_phi_initial", "n_phi_optimized", "r_initial", "r_optimized", "sigma_bar"]);
    for r in rows {
        t.push(vec![
            r.param_value.into(),
            r.n_phi_initial.into(),
            r.n_phi_optimized.into(),
            r.r_initial.into(),
            r.r_optimized.into(),
            r.sigma_bar.into(),
        ]);
    }
    Ok(t)
}

/// Draws `explore.n_samples` schedules with durations uniform in
/// `tau_range` and reports the exploration rate and approximation ratio of
/// each, without optimization.
pub fn cmd_explore(cfg: &ExperimentConfig, workers: usize) -> Result<Table> {
    let ex = cfg.explore.ok_or_else(|| Error::Config("config has no explore section".into()))?;
    let graph = cfg.graph.resolve()?;
    let n = graph.n_nodes;
    let ext = brute_force_extrema(&graph)?;
    let h = build_cost_hamiltonian(&graph)?;
    let h_mix = build_mixer(n)?;
    let system = cfg.open_system(n)?;
    let solver = cfg.metrics_solver()?;
    let [lo, hi] = ex.tau_range;
    let mut stream = rng::stream(cfg.seed);
    let schedules: Vec<ControlSchedule> = (0..ex.n_samples)
        .map(|_| {
            let flat: Vec<f64> = (0..2 * ex.depth).map(|_| lo + (hi - lo) * stream.gen::<f64>()).collect();
            ControlSchedule::from_flat(&flat)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<(f64, f64, f64, f64)> = pool(workers)?.install(|| {
        schedules
            .par_iter()
            .map(|s| {
                let (trace, rho_p) = distance_trace_with_state(&system, s, &h, &h_mix, cfg.metrics.grid_dt, &solver)?;
                let rep = exploration_rate_with(&trace, cfg.metrics.te_convention);
                Ok((rep.n_phi, rep.t_e, rep.sigma_bar, approximation_ratio(&h, &rho_p, &ext)?))
            })
            .collect::<Result<_>>()
    })?;
    let mut header = vec!["sample".to_string()];
    for j in 1..=ex.depth {
        header.push(format!("zeta_{j}"));
        header.push(format!("beta_{j}"));
    }
    header.extend(["n_phi", "t_e", "sigma_bar", "r"].map(String::from));
    let mut t = Table { header, rows: Vec::new() };
    for (i, (s, (n_phi, t_e, sigma_bar, r))) in schedules.iter().zip(rows).enumerate() {
        let mut row: Vec<Cell> = vec![i.into()];
        row.extend(s.to_flat().into_iter().map(Cell::from));
        row.extend([n_phi, t_e, sigma_bar, r].map(Cell::from));
        t.push(row);
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub n_nodes: usize,
    /// `master` or `trajectory(N)`.
    pub backend: String,
    /// `ok`, or `memory-limit` when the pre-flight estimate exceeds the cap.
    pub status: String,
    pub estimated_memory: u64,
    pub wall_time: Option<f64>,
    pub peak_memory: Option<u64>,
    /// Trace distance between this backend's ρ_p and the master result.
    pub result_distance: Option<f64>,
    pub time_ratio: Option<f64>,
    pub memory_ratio: Option<f64>,
}

/// Columns that hold measurements rather than computed results.
pub const BENCHMARK_MEASUREMENT_COLUMNS: [&str; 4] = ["wall_time", "peak_memory", "time_ratio", "memory_ratio"];

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64, Option<u64>)> {
    let start = Instant::now();
    let (out, peak) = alloc::measure_peak(f);
    let secs = start.elapsed().as_secs_f64();
    Ok((out?, secs, alloc::is_active().then_some(peak as u64)))
}

/// Bytes one worker of the trajectory backend keeps live: a batch of walker
/// state vectors and the pairwise-reduction stack of principal density
/// matrices. Each extra worker adds roughly one more such footprint.
pub fn trajectory_memory_estimate(system: &OpenSystem, n_traj: usize) -> u64 {
    let vec_bytes = 16 * system.dim() as u64;
    let per_walker = (3 + system.jumps.len() as u64) * vec_bytes;
    let stack = (usize::BITS - n_traj.leading_zeros()) as u64 + 2;
    let rho_bytes = 16 * (system.dim_p * system.dim_p) as u64;
    TRAJECTORY_BATCH as u64 * per_walker + stack * rho_bytes
}

/// Times the master and trajectory backends on the same schedule for each
/// node count of the multi-node fixture.
pub fn cmd_benchmark(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<BenchmarkRecord>> {
    let bench = cfg.benchmark.as_ref().ok_or_else(|| Error::Config("config has no benchmark section".into()))?;
    let dt = cfg.solver.dt();
    let mut records = Vec::new();
    for &n in &bench.node_counts {
        let graph = WeightedGraph::multinode(n)?;
        let h = build_cost_hamiltonian(&graph)?;
        let h_mix = build_mixer(n)?;
        let system = cfg.open_system(n)?;
        let psi = StateVector::uniform_superposition(n);

        let estimate = system.master_memory_estimate() as u64;
        let master = if estimate > bench.memory_cap_bytes {
            records.push(BenchmarkRecord {
                n_nodes: n,
                backend: "master".into(),
                status: "memory-limit".into(),
                estimated_memory: estimate,
                wall_time: None,
                peak_memory: None,
                result_distance: None,
                time_ratio: None,
                memory_ratio: None,
            });
            None
        } else {
            let rho0 = psi.tensor(&StateVector::basis(system.dim_a, 0)).outer();
            let solver = SolverConfig::new(dt)?;
            let (rho_p, secs, peak) = timed(|| {
                let rho = evolve_system(&system, &rho0, &bench.schedule, &h, &h_mix, &solver)?;
                partial_trace_ancilla(&rho, system.dim_p, system.dim_a)
            })?;
            drop(rho0);
            records.push(BenchmarkRecord {
                n_nodes: n,
                backend: "master".into(),
                status: "ok".into(),
                estimated_memory: estimate,
                wall_time: Some(secs),
                peak_memory: peak,
                result_distance: Some(0.0),
                time_ratio: None,
                memory_ratio: None,
            });
            Some((rho_p, secs, peak))
        };

        for &n_traj in &bench.traj_counts {
            let tcfg = TrajectoryConfig { n_traj, dt, base_seed: cfg.seed };
            let (res, secs, peak) =
                timed(|| run_ensemble(&system, &psi, &bench.schedule, &h, &h_mix, &tcfg, workers))?;
            let (distance, time_ratio, memory_ratio) = match &master {
                Some((rho_m, t_m, m_m)) => (
                    Some(trace_distance(&res.rho, rho_m)?),
                    Some(secs / t_m),
                    peak.zip(*m_m).map(|(a, b)| a as f64 / b as f64),
                ),
                None => (None, None, None),
            };
            records.push(BenchmarkRecord {
                n_nodes: n,
                backend: format!("trajectory({n_traj})"),
                status: "ok".into(),
                estimated_memory: trajectory_memory_estimate(&system, n_traj),
                wall_time: Some(secs),
                peak_memory: peak,
                result_distance: distance,
                time_ratio,
                memory_ratio,
            });
        }
    }
    Ok(records)
}

pub fn benchmark_table(records: &[BenchmarkRecord]) -> Table {
    let mut t = Table::new(&[
        "n_nodes",
        "backend",
        "status",
        "estimated_memory",
        "result_distance",
        "wall_time",
        "peak_memory",
        "time_ratio",
        "memory_ratio",
    ]);
    for r in records {
        t.push(vec![
            r.n_nodes.into(),
            r.backend.as_str().into(),
            r.status.as_str().into(),
            r.estimated_memory.into(),
            r.result_distance.into(),
            r.wall_time.into(),
            r.peak_memory.into(),
            r.time_ratio.into(),
            r.memory_ratio.into(),
        ]);
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultinodeRow {
    pub n_nodes: usize,
    pub r: f64,
    pub l1_norm: f64,
    pub depth: usize,
    pub h: f64,
    pub c_min: f64,
    pub iterations: usize,
}

/// Optimizes each induced prefix of the multi-node fixture.
pub fn cmd_multinode(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<MultinodeRow>> {
    let range = cfg.multinode.ok_or_else(|| Error::Config("config has no multinode section".into()))?;
    let [lo, hi] = range.node_range;
    let pool = pool(workers)?;
    (lo..=hi)
        .map(|n| {
            let graph = WeightedGraph::multinode(n)?;
            let ext = brute_force_extrema(&graph)?;
            let h = build_cost_hamiltonian(&graph)?;
            let h_mix = build_mixer(n)?;
            pool.install(|| {
                let ev = build_evaluator(cfg, n, &h, &h_mix, workers)?;
                let (best, trace, rho_p) = optimize(&cfg.optimizer.init, &cfg.optimizer.config, ev.as_ref())?;
                Ok(MultinodeRow {
                    n_nodes: n,
                    r: approximation_ratio(&h, &rho_p, &ext)?,
                    l1_norm: best.l1_norm(),
                    depth: best.effective_depth(),
                    h: trace.records[trace.best_iteration].h,
                    c_min: ext.c_min,
                    iterations: trace.iterations(),
                })
            })
        })
        .collect()
}

pub fn multinode_table(rows: &[MultinodeRow]) -> Table {
    let mut t = Table::new(&["n_nodes", "r", "l1_norm", "depth", "h", "c_min", "iterations"]);
    for r in rows {
        t.push(vec![
            r.n_nodes.into(),
            r.r.into(),
            r.l1_norm.into(),
            r.depth.into(),
            r.h.into(),
            r.c_min.into(),
            r.iterations.into(),
        ]);
    }
    t
}

/// Probabilities of the solve result as a two-column table.
pub fn solve_table(res: &SolveResult) -> Table {
    let mut t = Table::new(&["bitstrings", "probability"]);
    for (label, p) in &res.probabilities {
        t.push(vec![label.as_str().into(), (*p).into()]);
    }
    t
}
