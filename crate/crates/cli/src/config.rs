use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use grasp_core::sampler::MalaConfig;
use grasp_core::stability::StabilityConfig;
use grasp_core::transfer::TransferConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const DEFAULT_SAMPLE_COUNT: usize = 2048;

/// Everything a pipeline stage needs. The resolved value is echoed into the
/// header of every file the stage writes, so downstream stages can pick up
/// asset paths and rerunning with the echo reproduces the file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Hand the dataset is synthesized with.
    pub hand: Option<PathBuf>,
    /// Hand that transfer fits to the source maps.
    pub target_hand: Option<PathBuf>,
    pub objects: Vec<PathBuf>,
    /// Object surface samples; contact maps have one value per sample.
    pub sample_count: Option<usize>,
    pub seed: u64,
    /// Transfer at most this many source records.
    pub max_records: Option<usize>,
    pub synth: MalaConfig,
    pub transfer: TransferConfig,
    pub eval: StabilityConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
            _ => toml::from_str(&text).map_err(|e| e.to_string()),
        };
        parsed.map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count.unwrap_or(DEFAULT_SAMPLE_COUNT)
    }

    /// Fills asset fields still unset from the config echoed by an upstream
    /// stage.
    pub fn inherit(&mut self, upstream: &serde_json::Value) -> Result<()> {
        let up: PipelineConfig =
            serde_json::from_value(upstream.clone()).context("upstream header carries an unreadable config")?;
        if self.hand.is_none() {
            self.hand = up.hand;
        }
        if self.target_hand.is_none() {
            self.target_hand = up.target_hand;
        }
        if self.objects.is_empty() {
            self.objects = up.objects;
        }
        if self.sample_count.is_none() {
            self.sample_count = up.sample_count;
        }
        Ok(())
    }

    /// Routes the single top-level seed to every random consumer.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        self.synth.seed = self.seed;
        self.transfer.seed = self.seed;
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
