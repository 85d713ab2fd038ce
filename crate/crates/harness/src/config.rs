//! JSON experiment configuration. Every struct rejects unknown keys.

use std::path::{Path, PathBuf};

use pib_core::iiw::TrackConfig;
use pib_core::nn::{Activation, NetworkSpec};
use pib_core::pib::SgldConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Track,
    PibTrain,
    OracleValidate,
    SweepActivation,
    SweepDepth,
    SweepWidth,
    SweepBatch,
    SweepNoise,
    CompareRegularizers,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Track => "track",
            ExperimentKind::PibTrain => "pib_train",
            ExperimentKind::OracleValidate => "oracle_validate",
            ExperimentKind::SweepActivation => "sweep_activation",
            ExperimentKind::SweepDepth => "sweep_depth",
            ExperimentKind::SweepWidth => "sweep_width",
            ExperimentKind::SweepBatch => "sweep_batch",
            ExperimentKind::SweepNoise => "sweep_noise",
            ExperimentKind::CompareRegularizers => "compare_regularizers",
        }
    }

    pub fn is_sweep(self) -> bool {
        matches!(
            self,
            ExperimentKind::SweepActivation
                | ExperimentKind::SweepDepth
                | ExperimentKind::SweepWidth
                | ExperimentKind::SweepBatch
                | ExperimentKind::SweepNoise
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Mnist,
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub source: DataSource,
    /// Directory holding the four IDX files.
    pub dir: PathBuf,
    pub train_size: usize,
    pub test_size: usize,
    /// Fraction of training labels replaced by a different class.
    pub noise_ratio: f64,
    pub blob_dim: usize,
    pub blob_classes: usize,
    pub blob_separation: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Mnist,
            dir: PathBuf::from("data/mnist"),
            train_size: 4096,
            test_size: 2000,
            noise_ratio: 0.0,
            blob_dim: 20,
            blob_classes: 4,
            blob_separation: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            activation: Activation::Relu,
        }
    }
}

impl NetworkConfig {
    pub fn spec(&self, input: usize, classes: usize) -> Result<NetworkSpec> {
        let mut sizes = vec![input];
        sizes.extend(&self.hidden);
        sizes.push(classes);
        Ok(NetworkSpec::new(sizes, self.activation)?)
    }
}

/// Grid for the sweep experiments; only the list matching the experiment is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub activations: Vec<Activation>,
    /// Numbers of weight layers. Depth `d` has `d - 1` hidden layers, each
    /// as wide as `network.hidden[0]`.
    pub depths: Vec<usize>,
    /// Widths applied to every hidden layer.
    pub widths: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub noise_ratios: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            activations: Activation::ALL.to_vec(),
            depths: vec![1, 2, 3, 4],
            widths: vec![16, 32, 64, 128],
            batch_sizes: vec![4, 16, 64, 256],
            noise_ratios: vec![0.0, 0.4, 0.8],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    L2,
    Dropout,
    Pib,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::L2 => "l2",
            Method::Dropout => "dropout",
            Method::Pib => "pib",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub methods: Vec<Method>,
    pub weight_decay: f64,
    pub dropout: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Vanilla, Method::L2, Method::Dropout, Method::Pib],
            weight_decay: 1e-4,
            dropout: 0.1,
        }
    }
}

/// Sizes for the oracle pipelines of `oracle-validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub gradient_nets: usize,
    pub ridge_n: usize,
    pub logistic_n: usize,
    pub logistic_removals: usize,
    pub bootstrap_k: usize,
    pub bootstrap_n: usize,
    pub kl_samples: usize,
    pub poisson_draws: usize,
    pub sgld_samples: usize,
    pub sgld_stride: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            gradient_nets: 5,
            ridge_n: 100_000,
            logistic_n: 200,
            logistic_removals: 20,
            bootstrap_k: 300,
            bootstrap_n: 1000,
            kl_samples: 1_000_000,
            poisson_draws: 1_000_000,
            sgld_samples: 100_000,
            sgld_stride: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub track: TrackConfig,
    pub sgld: SgldConfig,
    pub sweep: SweepConfig,
    pub compare: CompareConfig,
    pub oracle: OracleConfig,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            dataset: DatasetConfig::default(),
            network: NetworkConfig::default(),
            track: TrackConfig::default(),
            sgld: SgldConfig::default(),
            sweep: SweepConfig::default(),
            compare: CompareConfig::default(),
            oracle: OracleConfig::default(),
            seeds: vec![0],
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let d = &self.dataset;
        if d.train_size == 0 || d.test_size == 0 {
            return bad("train_size and test_size must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&d.noise_ratio) {
            return bad(format!(
                "noise_ratio must lie in [0, 1], got {}",
                d.noise_ratio
            ));
        }
        if d.source == DataSource::Blobs
            && (d.blob_dim == 0 || d.blob_classes < 2 || !(d.blob_separation >= 0.0))
        {
            return bad("blobs need dim >= 1, classes >= 2 and separation >= 0".into());
        }
        if self.network.hidden.contains(&0) {
            return bad("hidden widths must be >= 1".into());
        }
        self.track
            .validate()
            .map_err(|e| HarnessError::config(format!("track: {e}")))?;
        if self.experiment == Some(ExperimentKind::PibTrain)
            || self.experiment == Some(ExperimentKind::CompareRegularizers)
        {
            self.sgld
                .validate()
                .map_err(|e| HarnessError::config(format!("sgld: {e}")))?;
        }
        let s = &self.sweep;
        if s.depths.contains(&0) || s.widths.contains(&0) || s.batch_sizes.contains(&0) {
            return bad("sweep depths, widths and batch sizes must be >= 1".into());
        }
        if s.noise_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("sweep noise ratios must lie in [0, 1]".into());
        }
        let c = &self.compare;
        if c.methods.is_empty() {
            return bad("compare.methods must not be empty".into());
        }
        if self.experiment == Some(ExperimentKind::CompareRegularizers) && c.methods.len() < 2 {
            return bad("compare needs at least two methods".into());
        }
        if c.weight_decay < 0.0 || !(0.0..1.0).contains(&c.dropout) {
            return bad("compare needs weight_decay >= 0 and dropout in [0, 1)".into());
        }
        let o = &self.oracle;
        if o.bootstrap_k < 2 || o.logistic_n < 2 || o.ridge_n < 2 || o.sgld_stride == 0 {
            return bad("oracle sizes too small".into());
        }
        Ok(())
    }

    pub fn with_kind(mut self, kind: ExperimentKind) -> Result<Self> {
        match self.experiment {
            Some(k) if k != kind => Err(HarnessError::config(format!(
                "config declares experiment {:?} but `{}` was requested",
                k.name(),
                kind.name()
            ))),
            _ => {
                self.experiment = Some(kind);
                self.validate()?;
                Ok(self)
            }
        }
    }
}
