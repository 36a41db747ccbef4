//! Experiment configuration (TOML).
//!
//! Every key has a default except `dataset`, and unknown keys are rejected.
//! Relative CSV paths resolve against the directory holding the config file.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/demo"
//!
//! [window]
//! length = 64          # t
//! train_stride = 32    # default t/2
//! score_stride = 1
//!
//! [model]
//! hidden = [64, 16, 64]
//!
//! [train]
//! epochs = 50
//! batch_size = 32
//! loss = "strad"       # mse | strad | mse_plus_strad
//! mix = 0.5
//! [train.adam]
//! learning_rate = 1e-3
//!
//! [loss]
//! lambda1 = 1.5
//! lambda2 = 10.0
//! lambda3 = 1.0
//! epsilon = 1e-7
//! trend_variant = "monotone"   # monotone | paper
//! spectral_norm = "modulus"    # modulus | parts
//!
//! [score]
//! mode = "strad_broadcast"     # strad_broadcast | shape_only
//!
//! [threshold]
//! mode = "best_f1"             # best_f1 | quantile
//! metric = "rpa"
//! quantile = 0.99
//!
//! [eval]
//! metrics = ["rpa", "pa"]
//!
//! [compare]
//! losses = ["mse", "strad"]
//! seeds = [0, 1, 2]    # default [seed]
//! jobs = 1
//!
//! [[dataset]]
//! name = "seasonal"
//! [dataset.synth]
//! length = 4000
//! train_fraction = 0.5
//! noise_sigma = 0.05
//! [[dataset.synth.channel]]
//! frequency = 0.02
//! [[dataset.synth.anomaly]]
//! kind = "seasonal_pattern"
//! start = 2500
//! length = 80
//! magnitude = 2.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use strad::autoencoder::AdamConfig;
use strad::detector::{LossKind, ScoreMode, TrainConfig};
use strad::metrics::Metric;
use strad::synth::{AnomalySpec, ChannelConfig, GeneratorConfig};
use strad::LossWeights;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub normalize: bool,
    #[serde(default)]
    pub window: WindowSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub loss: LossWeights,
    #[serde(default)]
    pub score: ScoreSection,
    #[serde(default)]
    pub threshold: ThresholdSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(rename = "dataset", default)]
    pub datasets: Vec<DatasetConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSection {
    pub length: usize,
    /// Defaults to half the window length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_stride: Option<usize>,
    pub score_stride: usize,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self {
            length: 64,
            train_stride: None,
            score_stride: 1,
        }
    }
}

impl WindowSection {
    pub fn train_stride(&self) -> usize {
        self.train_stride.unwrap_or((self.length / 2).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![64, 16, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub mix: f64,
    pub adam: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            epochs: base.epochs,
            batch_size: base.batch_size,
            loss: base.loss,
            mix: base.mix,
            adam: base.adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreSection {
    pub mode: ScoreMode,
    /// Weights used for scoring; defaults to `[loss]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<LossWeights>,
}

impl Default for ScoreSection {
    fn default() -> Self {
        Self {
            mode: ScoreMode::StradBroadcast,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Best F1 against the test labels.
    BestF1,
    /// Quantile of training-split scores; never looks at test labels.
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSection {
    pub mode: ThresholdMode,
    /// Metric maximized by `best_f1` when a single threshold is needed.
    pub metric: Metric,
    pub quantile: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        Self {
            mode: ThresholdMode::BestF1,
            metric: Metric::Rpa,
            quantile: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub metrics: Vec<Metric>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::Rpa, Metric::Pa],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub losses: Vec<LossKind>,
    /// Seeds per (loss, dataset); defaults to the top-level seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Worker threads for independent jobs.
    pub jobs: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            losses: vec![LossKind::Mse, LossKind::Strad],
            seeds: None,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub train: PathBuf,
    pub test: PathBuf,
    pub value_columns: Vec<String>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
}

fn default_label_column() -> String {
    "label".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSource {
    pub length: usize,
    #[serde(default = "half")]
    pub train_fraction: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Defaults to the top-level seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub channel: Vec<ChannelConfig>,
    #[serde(default)]
    pub anomaly: Vec<AnomalySpec>,
}

fn half() -> f64 {
    0.5
}

impl SynthSource {
    pub fn generator(&self, default_seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            length: self.length,
            channels: self.channel.clone(),
            noise_sigma: self.noise_sigma,
            seed: self.seed.unwrap_or(default_seed),
        }
    }
}

/// Parses and validates a config from TOML text.
pub fn parse(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    cfg.validate().map_err(|message| CliError::Config {
        path: origin.to_path_buf(),
        message,
    })?;
    Ok(cfg)
}

/// Reads a config file and resolves relative CSV paths against its directory.
pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = parse(&text, path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for ds in &mut cfg.datasets {
        if let Some(csv) = &mut ds.csv {
            if csv.train.is_relative() {
                csv.train = base.join(&csv.train);
            }
            if csv.test.is_relative() {
                csv.test = base.join(&csv.test);
            }
        }
    }
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.window.length == 0 {
            return Err("window.length must be positive".into());
        }
        if self.window.score_stride == 0 || self.window.train_stride == Some(0) {
            return Err("window strides must be positive".into());
        }
        if self.model.hidden.contains(&0) {
            return Err("model.hidden sizes must be positive".into());
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err("train.epochs and train.batch_size must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.train.mix) {
            return Err(format!("train.mix {} outside [0, 1]", self.train.mix));
        }
        if !(self.threshold.quantile > 0.0 && self.threshold.quantile <= 1.0) {
            return Err(format!(
                "threshold.quantile {} outside (0, 1]",
                self.threshold.quantile
            ));
        }
        if self.eval.metrics.is_empty() {
            return Err("eval.metrics must not be empty".into());
        }
        if self.compare.jobs == 0 {
            return Err("compare.jobs must be >= 1".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for ds in &self.datasets {
            if ds.name.is_empty() || ds.name.contains(['/', '\\']) || ds.name.starts_with('.') {
                return Err(format!(
                    "dataset name `{}` is not a plain file name",
                    ds.name
                ));
            }
            if !names.insert(ds.name.as_str()) {
                return Err(format!("duplicate dataset name `{}`", ds.name));
            }
            match (&ds.csv, &ds.synth) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(format!(
                        "dataset `{}` needs exactly one of [csv] or [synth]",
                        ds.name
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn layer_sizes(&self, input: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend(&self.model.hidden);
        sizes.push(input);
        sizes
    }

    pub fn train_config(&self, loss: LossKind, weights: LossWeights, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed,
            loss,
            weights,
            mix: self.train.mix,
            adam: self.train.adam,
        }
    }

    pub fn score_weights(&self) -> LossWeights {
        self.score.weights.unwrap_or(self.loss)
    }

    pub fn compare_seeds(&self) -> Vec<u64> {
        self.compare
            .seeds
            .clone()
            .unwrap_or_else(|| vec![self.seed])
    }

    pub fn dataset(&self, name: Option<&str>) -> Result<&DatasetConfig> {
        match name {
            Some(n) => self
                .datasets
                .iter()
                .find(|d| d.name == n)
                .ok_or_else(|| CliError::Usage(format!("no dataset named `{n}` in config"))),
            None if self.datasets.len() == 1 => Ok(&self.datasets[0]),
            None => Err(CliError::Usage(
                "config has several datasets; pass --dataset".into(),
            )),
        }
    }

    pub fn require_datasets(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(CliError::Usage("config defines no [[dataset]]".into()));
        }
        Ok(())
    }

    /// Canonical TOML rendering of the resolved config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical rendering. The
    /// output directory and thread count do not change results, so they are
    /// left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.compare.jobs = 1;
        short_hash(c.to_toml().as_bytes())
    }
}

pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}
