//! Datasets, training, prediction, evaluation and benchmarking.

pub mod bench;
pub mod data;
pub mod metrics;
pub mod model;
pub mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cogspace::{SpaceConfig, SpaceError};
use crate::neural::{NeuralConfig, NeuralError};
use crate::partition::{PartitionConfig, PartitionError};
use crate::tree::{BuildConfig, TreeConfig, TreeError};

pub use bench::{kfold_benchmark, user_folds, Baselines, BenchmarkReport, FoldResult, FoldRow, MeanRow};
pub use data::{emit, ingest, DataError, Dataset, DatasetManifest, Video};
pub use metrics::{evaluate, partition_quality, Confusion, Evaluation, LevelQuality, LevelScore, MetricsReport};
pub use model::{predict, trace, train_tree, Prediction, Trace, TrainReport};
pub use synth::{synth, SynthOutput, SynthSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("tree is not trained: {0}")]
    Untrained(String),
    #[error("test split has no videos")]
    EmptyTestSet,
    #[error("user {0} is not in the dataset")]
    UnknownUser(String),
    #[error("cannot make {k} folds from {users} users (need 2 <= k <= users)")]
    InvalidFolds { k: usize, users: usize },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// The single configuration file every command reads.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub space: SpaceConfig,
    pub partition: PartitionConfig,
    pub tree: TreeConfig,
    pub neural: NeuralConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        self.build().validate()?;
        self.neural.validate()?;
        Ok(())
    }

    pub fn build(&self) -> BuildConfig {
        BuildConfig {
            space: self.space,
            partition: self.partition.clone(),
            tree: self.tree.clone(),
        }
    }
}
