//! Named experiment configurations.

use crate::augmented::LorentzianMode;
use crate::error::{Error, Result};
use crate::lindblad::SolverConfig;
use crate::metrics::{SweepParam, TeConvention};
use crate::optimizer::OptimizerConfig;
use crate::schedule::ControlSchedule;
use crate::trajectory::TrajectoryConfig;

use super::config::{
    BenchmarkSection, Environment, ExperimentConfig, ExploreSection, GraphSpec, MetricsSection, MultinodeSection,
    OptimizerSection, OutputSection, SolverSpec, SweepSection, DEFAULT_MEMORY_CAP,
};

pub const PRESET_NAMES: [&str; 5] = [
    "paper-4node-nonmarkovian",
    "paper-4node-markovian",
    "paper-4node-closed",
    "paper-4node-double-lorentzian",
    "table2-multinode",
];

/// Ancilla levels per mode in the double-Lorentzian preset.
pub const DOUBLE_LORENTZIAN_LEVELS: usize = 4;

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let four_node = ExperimentConfig {
        graph: GraphSpec::Named("paper-4node".into()),
        environment: Environment::Augmented,
        modes: vec![LorentzianMode::primary()],
        markovian_rate: None,
        solver: SolverSpec::Master(SolverConfig::default()),
        optimizer: OptimizerSection::default(),
        metrics: MetricsSection { dt: Some(2e-3), ..MetricsSection::default() },
        sweep: Some(SweepSection { param: SweepParam::Gamma, values: vec![0.1, 0.3, 1.0, 3.0, 10.0, 100.0], optimize: false }),
        explore: Some(ExploreSection { n_samples: 28, tau_range: [0.5, 4.0], depth: 2 }),
        benchmark: None,
        multinode: None,
        output: OutputSection::default(),
        seed: 0,
    };
    let cfg = match name {
        "paper-4node-nonmarkovian" => four_node,
        "paper-4node-markovian" => ExperimentConfig { environment: Environment::Markovian, ..four_node },
        "paper-4node-closed" => ExperimentConfig { environment: Environment::Closed, ..four_node },
        "paper-4node-double-lorentzian" => ExperimentConfig {
            modes: [LorentzianMode::primary(), LorentzianMode::secondary()]
                .map(|m| LorentzianMode { levels: DOUBLE_LORENTZIAN_LEVELS, ..m })
                .to_vec(),
            metrics: MetricsSection { grid_dt: 0.01, dt: Some(4e-3), te_convention: TeConvention::Strict },
            explore: Some(ExploreSection { n_samples: 100, tau_range: [0.5, 4.0], depth: 2 }),
            ..four_node
        },
        "table2-multinode" => ExperimentConfig {
            graph: GraphSpec::Named("table2-5".into()),
            solver: SolverSpec::Trajectory(TrajectoryConfig { n_traj: 100, dt: 2e-3, base_seed: 0 }),
            optimizer: OptimizerSection {
                config: OptimizerConfig { max_iters: 20, ..OptimizerConfig::default() },
                init: ControlSchedule::uniform(2, 0.5)?,
            },
            sweep: None,
            explore: None,
            benchmark: Some(BenchmarkSection {
                node_counts: vec![5, 6, 7, 8, 9],
                traj_counts: vec![500],
                schedule: ControlSchedule::from_flat(&[0.05, 0.05])?,
                memory_cap_bytes: DEFAULT_MEMORY_CAP,
            }),
            multinode: Some(MultinodeSection { node_range: [5, 11] }),
            ..four_node
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?}; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}
