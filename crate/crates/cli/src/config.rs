//! Run configuration: one JSON file covering every subcommand, with the
//! common flags applied on top.

use std::path::{Path, PathBuf};

use anyhow::Context;
use scenerel::commonsense::ValidationConfig;
use scenerel::llm_client::ClientConfig;
use scenerel::metrics::{EvalMode, RecallAveraging};
use scenerel::training::{LossWeights, SyntheticConfig, DEFAULT_LAMBDA_STRONG, DEFAULT_LAMBDA_WEAK};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` lets rayon decide.
    pub jobs: Option<usize>,
    pub training: TrainingConfig,
    pub inference: InferenceConfig,
    pub validation: ValidationConfig,
    pub client: ClientConfig,
    pub eval: EvalConfig,
    pub clustering: ClusteringConfig,
    pub distill: DistillConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Pair feature width.
    pub d: usize,
    pub lr: f64,
    pub steps: usize,
    pub loss: LossWeights,
    pub category_sizes: Vec<usize>,
    pub synthetic: SyntheticConfig,
    /// JSONL of `{"pooled": [...], "relation": r | null}`; synthetic data when absent.
    pub features: Option<PathBuf>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            d: 16,
            lr: 1e-2,
            steps: 2000,
            loss: LossWeights::default(),
            category_sizes: vec![2, 2, 2],
            synthetic: SyntheticConfig::default(),
            features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Keep only the `top_k` best candidates per image; all when absent.
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub ks: Vec<usize>,
    pub averaging: RecallAveraging,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { mode: EvalMode::PredCls, ks: vec![20, 50, 100], averaging: RecallAveraging::Micro }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub k: usize,
    pub restarts: usize,
    pub l2_normalize: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self { k: 3, restarts: scenerel::clustering::DEFAULT_RESTARTS, l2_normalize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub lambda_weak: f64,
    pub lambda_strong: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self { lambda_weak: DEFAULT_LAMBDA_WEAK, lambda_strong: DEFAULT_LAMBDA_STRONG }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
