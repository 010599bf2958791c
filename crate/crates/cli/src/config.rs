use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kacq::dataset::PipelineConfig;
use kacq::models::{Hyperparams, ModelKind, Variant};
use kacq::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Settings for the explanation dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub instances: usize,
    pub background: usize,
    pub lime_samples: usize,
    /// Permutations for the sampled Shapley estimator (used past 16 features).
    pub shapley_permutations: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            instances: 5,
            background: 100,
            lime_samples: 5000,
            shapley_permutations: 2000,
        }
    }
}

/// Everything a command needs. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    /// Generate this many synthetic rows instead of reading `data`.
    pub synthetic_rows: Option<usize>,
    pub model: String,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub k_folds: usize,
    /// Runs per ablation row, at seeds `seed, seed + 1, …`.
    pub repeats: usize,
    pub threads: usize,
    pub out: PathBuf,
    pub hyperparams: Hyperparams,
    pub variant: Variant,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub explain: ExplainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            synthetic_rows: None,
            model: "kacq_dcnn".into(),
            seed: 42,
            alphas: vec![0.05, 0.1, 0.2],
            k_folds: 10,
            repeats: 1,
            threads: 0,
            out: PathBuf::from("out"),
            hyperparams: Hyperparams::default(),
            variant: Variant::default(),
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| UsageError(format!("invalid config: {e}")).into())
    }

    /// Canonical TOML form.
    pub fn canonical(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        self.model
            .parse()
            .map_err(|e| UsageError(format!("--model: {e}")).into())
    }

    pub fn validate(&self) -> Result<()> {
        self.model_kind()?;
        self.hyperparams.validate().map_err(|e| UsageError(e.to_string()))?;
        self.train.validate().map_err(|e| UsageError(e.to_string()))?;
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            bail!(UsageError(format!("alpha {a} is not in (0, 1)")));
        }
        if self.k_folds < 2 {
            bail!(UsageError(format!("k_folds = {} (need at least 2)", self.k_folds)));
        }
        if self.repeats == 0 {
            bail!(UsageError("repeats must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip() {
        let mut c = RunConfig::default();
        c.data = Some("data/heart.csv".into());
        c.hyperparams.mlp_width_scale = Some(1.25);
        c.train.optimizer = kacq::train::Optimizer::Nesterov { momentum: 0.9 };
        let text = c.canonical().unwrap();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.canonical().unwrap(), text);
    }

    #[test]
    fn partial_config_and_unknown_keys() {
        let c = RunConfig::parse("seed = 7\n[train]\nmax_epochs = 3\n").unwrap();
        assert_eq!((c.seed, c.train.max_epochs, c.train.batch_size), (7, 3, 32));
        let e = RunConfig::parse("sede = 7\n").unwrap_err();
        assert!(e.downcast_ref::<UsageError>().is_some());
    }
}
