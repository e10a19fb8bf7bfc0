use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::PartitionSpec;
use crate::error::{Error, Result};
use crate::evaluation::EnergyParams;
use crate::fedcore::{Algorithm, CorrectionUpdate, HyperParams};
use crate::geometry::BallConstraint;
use crate::models::ModelShape;

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// A complete experiment description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub monte_carlo_runs: usize,
    /// Evaluate the global model every this many rounds.
    #[serde(default = "one")]
    pub metrics_every: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub training: TrainingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyParams>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Idx,
    Synthetic,
}

/// Where the data comes from. IDX sources name a directory holding the four
/// standard MNIST file names and/or explicit paths, which take precedence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    /// Synthetic: training samples per class.
    #[serde(default = "default_per_class")]
    pub samples_per_class: usize,
    /// Synthetic: test samples per class.
    #[serde(default = "default_test_per_class")]
    pub test_samples_per_class: usize,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    /// Synthetic: distance between the two class means.
    #[serde(default = "default_separation")]
    pub separation: f64,
}

fn default_per_class() -> usize {
    500
}
fn default_test_per_class() -> usize {
    200
}
fn default_feature_dim() -> usize {
    10
}
fn default_separation() -> f64 {
    2.0
}

/// The four resolved IDX file paths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl DatasetConfig {
    pub fn idx_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            kind: DatasetKind::Idx,
            dir: Some(dir.into()),
            ..Self::synthetic()
        }
    }

    pub fn synthetic() -> Self {
        Self {
            kind: DatasetKind::Synthetic,
            dir: None,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            samples_per_class: default_per_class(),
            test_samples_per_class: default_test_per_class(),
            feature_dim: default_feature_dim(),
            separation: default_separation(),
        }
    }

    /// Resolves the IDX file paths; relative paths are taken from `base`.
    pub fn idx_paths(&self, base: &Path) -> Result<IdxPaths> {
        let pick = |explicit: &Option<PathBuf>, name: &str, key: &str| -> Result<PathBuf> {
            let p = match (explicit, &self.dir) {
                (Some(p), _) => p.clone(),
                (None, Some(d)) => d.join(name),
                (None, None) => {
                    return Err(Error::config(
                        format!("dataset.{key}"),
                        "IDX datasets need `dir` or explicit file paths",
                    ))
                }
            };
            Ok(if p.is_relative() { base.join(p) } else { p })
        };
        Ok(IdxPaths {
            train_images: pick(&self.train_images, MNIST_TRAIN_IMAGES, "train_images")?,
            train_labels: pick(&self.train_labels, MNIST_TRAIN_LABELS, "train_labels")?,
            test_images: pick(&self.test_images, MNIST_TEST_IMAGES, "test_images")?,
            test_labels: pick(&self.test_labels, MNIST_TEST_LABELS, "test_labels")?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_clients")]
    pub num_clients: usize,
}

fn default_alpha() -> f64 {
    0.1
}
fn default_clients() -> usize {
    30
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            sigma: 0.0,
            num_clients: default_clients(),
        }
    }
}

impl PartitionConfig {
    pub fn spec(&self) -> PartitionSpec {
        PartitionSpec {
            sigma: self.sigma,
            alpha: self.alpha,
            num_clients: self.num_clients,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_model_kind")]
    pub kind: ModelKind,
    /// Hidden width of the MLP.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
}

fn default_model_kind() -> ModelKind {
    ModelKind::Linear
}
fn default_hidden() -> usize {
    64
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Linear,
            hidden: default_hidden(),
        }
    }
}

impl ModelConfig {
    pub fn shape(&self, input: usize, classes: usize) -> ModelShape {
        match self.kind {
            ModelKind::Linear => ModelShape::linear(input, classes),
            ModelKind::Mlp => ModelShape::mlp(input, self.hidden, classes),
        }
    }
}

/// Algorithm choice and hyperparameters. `mu` and `c_update` are read by DRDM only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_tau")]
    pub tau: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_radius")]
    pub ball_radius: f64,
    #[serde(default)]
    pub c_update: CorrectionUpdate,
}

fn default_eta() -> f64 {
    0.01
}
fn default_gamma() -> f64 {
    0.002
}
fn default_mu() -> f64 {
    0.3
}
fn default_tau() -> usize {
    10
}
fn default_m() -> usize {
    20
}
fn default_batch() -> usize {
    32
}
fn default_rounds() -> usize {
    400
}
fn default_radius() -> f64 {
    BallConstraint::DEFAULT_RADIUS
}

impl TrainingConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            eta: default_eta(),
            gamma: default_gamma(),
            mu: default_mu(),
            tau: default_tau(),
            m: default_m(),
            batch: default_batch(),
            rounds: default_rounds(),
            ball_radius: default_radius(),
            c_update: CorrectionUpdate::default(),
        }
    }

    /// Hyperparameters as the algorithm sees them; μ is zeroed for the baselines.
    pub fn hyper_params(&self) -> HyperParams {
        HyperParams {
            eta: self.eta,
            gamma: self.gamma,
            mu: if self.algorithm == Algorithm::Drdm { self.mu } else { 0.0 },
            tau: self.tau,
            m: self.m,
            batch: self.batch,
            rounds: self.rounds,
        }
    }

    pub fn ball(&self) -> Result<BallConstraint> {
        BallConstraint::new(self.ball_radius).map_err(|e| Error::config("training.ball_radius", e.to_string()))
    }
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetConfig, algorithm: Algorithm) -> Self {
        Self {
            seed: 0,
            monte_carlo_runs: 1,
            metrics_every: 1,
            dataset,
            partition: PartitionConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::new(algorithm),
            energy: None,
        }
    }

    /// Checks every cross-field constraint, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        positive("training.eta", t.eta)?;
        if !(t.gamma >= 0.0) || !t.gamma.is_finite() {
            return Err(Error::config("training.gamma", format!("must be non-negative, got {}", t.gamma)));
        }
        if !(t.mu >= 0.0) || !t.mu.is_finite() {
            return Err(Error::config("training.mu", format!("must be non-negative, got {}", t.mu)));
        }
        positive("training.ball_radius", t.ball_radius)?;
        for (key, v) in [
            ("training.tau", t.tau),
            ("training.m", t.m),
            ("training.batch", t.batch),
            ("monte_carlo_runs", self.monte_carlo_runs),
            ("metrics_every", self.metrics_every),
            ("partition.num_clients", self.partition.num_clients),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if t.m > self.partition.num_clients {
            return Err(Error::config(
                "training.m",
                format!("{} participants exceed the {} clients", t.m, self.partition.num_clients),
            ));
        }
        positive("partition.alpha", self.partition.alpha)?;
        if !(self.partition.sigma >= 0.0) || !self.partition.sigma.is_finite() {
            return Err(Error::config("partition.sigma", "must be non-negative and finite"));
        }
        if self.model.kind == ModelKind::Mlp && self.model.hidden == 0 {
            return Err(Error::config("model.hidden", "must be at least 1"));
        }
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Idx => {
                d.idx_paths(Path::new("."))?;
            }
            DatasetKind::Synthetic => {
                if d.samples_per_class == 0 {
                    return Err(Error::config("dataset.samples_per_class", "must be at least 1"));
                }
                if d.test_samples_per_class == 0 {
                    return Err(Error::config("dataset.test_samples_per_class", "must be at least 1"));
                }
                if d.feature_dim == 0 {
                    return Err(Error::config("dataset.feature_dim", "must be at least 1"));
                }
                if !d.separation.is_finite() {
                    return Err(Error::config("dataset.separation", "must be finite"));
                }
            }
        }
        if let Some(e) = &self.energy {
            e.validate().map_err(|err| Error::config("energy", err.to_string()))?;
        }
        Ok(())
    }

    /// Canonical TOML text; parsing it gives back an equal config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<root>", e.to_string()))
    }
}

/// Parses and validates a TOML experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<root>", e.message().to_string()))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::config(if path == "." { "<root>".to_string() } else { path }, inner.message().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}
