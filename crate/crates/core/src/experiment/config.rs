//! Experiment configuration (JSON).
//!
//! A config file may name a preset with `"preset": "<name>"`; the preset is
//! expanded first and the remaining keys of the file override it, merging
//! nested objects key by key.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::augmented::{build_augmented_model, AugmentedModel, LorentzianMode};
use crate::error::{Error, Result};
use crate::lindblad::{sigma_y_channels, OpenSystem, SolverConfig};
use crate::maxcut::WeightedGraph;
use crate::metrics::{SweepParam, TeConvention, DEFAULT_GRID_DT};
use crate::optimizer::OptimizerConfig;
use crate::schedule::ControlSchedule;
use crate::trajectory::TrajectoryConfig;

use super::presets;

/// Damping-rate factor of the `markovian-limit` environment.
pub const MARKOVIAN_LIMIT_FACTOR: f64 = 100.0;

/// Default master-backend memory cap for benchmarks: 4 GiB.
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    #[serde(default)]
    pub environment: Environment,
    #[serde(default)]
    pub modes: Vec<LorentzianMode>,
    /// σ^y dephasing rate of the `markovian` environment; defaults to the
    /// first mode's κ (or 1 without modes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markovian_rate: Option<f64>,
    pub solver: SolverSpec,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore: Option<ExploreSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multinode: Option<MultinodeSection>,
    #[serde(default)]
    pub output: OutputSection,
    /// Seed of every random choice made by a command.
    #[serde(default)]
    pub seed: u64,
}

/// A graph given inline or by name: `"paper-4node"` or `"table2-<n>"`
/// (the first n nodes of the multi-node fixture, 2 ≤ n ≤ 11).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Named(String),
    Inline(WeightedGraph),
}

impl GraphSpec {
    pub fn resolve(&self) -> Result<WeightedGraph> {
        match self {
            GraphSpec::Inline(g) => {
                g.validate()?;
                Ok(g.clone())
            }
            GraphSpec::Named(name) if name == "paper-4node" => Ok(WeightedGraph::four_node()),
            GraphSpec::Named(name) => match name.strip_prefix("table2-").map(str::parse::<usize>) {
                Some(Ok(n)) if (2..=11).contains(&n) => WeightedGraph::multinode(n),
                _ => Err(Error::Config(format!("unknown graph {name:?}"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Environment {
    /// Qubits coupled to the oscillator modes.
    #[default]
    Augmented,
    /// σ^y dephasing on each qubit, no memory.
    Markovian,
    /// The augmented model with every damping rate scaled up a hundredfold.
    MarkovianLimit,
    /// No environment.
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SolverSpec {
    Master(SolverConfig),
    Trajectory(TrajectoryConfig),
}

impl SolverSpec {
    pub fn dt(&self) -> f64 {
        match self {
            SolverSpec::Master(c) => c.dt,
            SolverSpec::Trajectory(c) => c.dt,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSection {
    #[serde(flatten)]
    pub config: OptimizerConfig,
    /// Initial schedule (ζ_1, β_1, …).
    pub init: ControlSchedule,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self { config: OptimizerConfig::default(), init: ControlSchedule::uniform(2, 3.0).unwrap() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub grid_dt: f64,
    /// Integration step for metric evolutions; the solver's step when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub te_convention: TeConvention,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { grid_dt: DEFAULT_GRID_DT, dt: None, te_convention: TeConvention::Strict }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Also optimize every point from `optimizer.init`.
    #[serde(default)]
    pub optimize: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreSection {
    pub n_samples: usize,
    pub tau_range: [f64; 2],
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_depth() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub node_counts: Vec<usize>,
    pub traj_counts: Vec<usize>,
    pub schedule: ControlSchedule,
    #[serde(default = "default_cap")]
    pub memory_cap_bytes: u64,
}

fn default_cap() -> u64 {
    DEFAULT_MEMORY_CAP
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultinodeSection {
    pub node_range: [usize; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Auto,
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    /// Parses a config, expanding a `"preset"` key if present.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let Value::Object(mut map) = value else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let resolved = match map.remove("preset") {
            None => Value::Object(map),
            Some(Value::String(name)) => {
                let mut base = serde_json::to_value(presets::preset(&name)?)?;
                merge(&mut base, Value::Object(map));
                base
            }
            Some(_) => return Err(Error::Config("\"preset\" must be a string".into())),
        };
        let cfg: Self = serde_json::from_value(resolved).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.graph.resolve().map_err(cfg_err)?;
        for m in &self.modes {
            m.validate().map_err(cfg_err)?;
        }
        if matches!(self.environment, Environment::Augmented | Environment::MarkovianLimit) && self.modes.is_empty() {
            return Err(Error::Config("this environment needs at least one mode".into()));
        }
        if let Some(rate) = self.markovian_rate {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::Config(format!("markovian_rate must be >= 0, got {rate}")));
            }
        }
        match &self.solver {
            SolverSpec::Master(c) => c.validate().map_err(cfg_err)?,
            SolverSpec::Trajectory(c) => c.validate().map_err(cfg_err)?,
        }
        self.optimizer.config.validate().map_err(cfg_err)?;
        if self.optimizer.init.is_empty() {
            return Err(Error::Config("optimizer.init must be nonempty".into()));
        }
        if !(self.metrics.grid_dt > 0.0) || self.metrics.dt.is_some_and(|dt| !(dt > 0.0)) {
            return Err(Error::Config("metrics steps must be > 0".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("sweep.values must be nonempty".into()));
            }
        }
        if let Some(e) = &self.explore {
            let [lo, hi] = e.tau_range;
            if e.n_samples == 0 || e.depth == 0 || !(0.0 <= lo && lo <= hi && hi.is_finite()) {
                return Err(Error::Config("explore needs n_samples, depth >= 1 and 0 <= lo <= hi".into()));
            }
        }
        if let Some(b) = &self.benchmark {
            if b.node_counts.is_empty() || b.traj_counts.is_empty() || b.traj_counts.contains(&0) {
                return Err(Error::Config("benchmark needs node and nonzero trajectory counts".into()));
            }
            if b.node_counts.iter().any(|n| !(2..=11).contains(n)) {
                return Err(Error::Config("benchmark node counts must lie in 2..=11".into()));
            }
        }
        if let Some(m) = &self.multinode {
            let [lo, hi] = m.node_range;
            if !(5 <= lo && lo <= hi && hi <= 11) {
                return Err(Error::Config("multinode.node_range must lie within [5, 11]".into()));
            }
        }
        Ok(())
    }

    /// Applies command-line overrides of the seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let SolverSpec::Trajectory(c) = &mut self.solver {
            c.base_seed = seed;
        }
        self
    }

    pub fn metrics_solver(&self) -> Result<SolverConfig> {
        SolverConfig::new(self.metrics.dt.unwrap_or(self.solver.dt()))
    }

    /// The augmented model for `n_qubits`, if the environment uses one.
    pub fn model(&self, n_qubits: usize) -> Result<Option<AugmentedModel>> {
        Ok(match self.environment {
            Environment::Augmented => Some(build_augmented_model(n_qubits, &self.modes)?),
            Environment::MarkovianLimit => {
                Some(build_augmented_model(n_qubits, &self.modes)?.with_gamma_scaled(MARKOVIAN_LIMIT_FACTOR)?)
            }
            Environment::Markovian | Environment::Closed => None,
        })
    }

    /// The open system for `n_qubits` under this environment.
    pub fn open_system(&self, n_qubits: usize) -> Result<OpenSystem> {
        let dim_p = 1usize << n_qubits;
        if let Some(model) = self.model(n_qubits)? {
            return Ok(OpenSystem::from_model(&model));
        }
        match self.environment {
            Environment::Closed => Ok(OpenSystem::closed(dim_p)),
            _ => {
                let rate = self.markovian_rate.unwrap_or_else(|| self.modes.first().map_or(1.0, |m| m.kappa));
                OpenSystem::markovian(dim_p, &sigma_y_channels(n_qubits, rate)?)
            }
        }
    }
}

/// Overlays `patch` onto `base`, merging objects recursively.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
