//! TOML run configuration. Every field is optional; command-line flags win.
//!
//! ```toml
//! seed = 7
//!
//! [solver]
//! program = "z3"
//! deadline = 2400.0
//!
//! [dataset]
//! k = 7
//! count = 1000
//! backend = "oracle"
//!
//! [model]
//! layer_dims = [10, 5]
//! aggregation = "sum"
//!
//! [train]
//! epochs = 100
//! batch_size = 32
//!
//! [bench]
//! jobs = 1
//! ```

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use neurodeploy::gnn::{Aggregation, ClassWeights};
use neurodeploy::hetgraph::RelationMode;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub solver: SolverSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Overridden by `$NEURODEPLOY_SOLVER`.
    pub program: Option<String>,
    pub args: Vec<String>,
    /// Seconds.
    pub deadline: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub k: Option<usize>,
    pub count: Option<usize>,
    pub backend: Option<String>,
    pub test_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub input_dim: Option<usize>,
    pub layer_dims: Option<Vec<usize>>,
    pub predictor_hidden: Option<usize>,
    pub classes: Option<usize>,
    pub aggregation: Option<Aggregation>,
    pub relation_mode: Option<RelationMode>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub gamma: Option<f64>,
    pub class_weights: Option<ClassWeights>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub jobs: Option<usize>,
    pub negatives: Option<bool>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
