//! Run configuration: one TOML document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::ZGrid;
use crate::data::{CsvSchema, DEFAULT_SPLIT};
use crate::error::{Error, Result};
use crate::gp::{DEFAULT_JITTER, DEFAULT_MAX_POINTS};
use crate::inference::MethodSpec;
use crate::losses::LossSpec;
use crate::network::{Activation, HeadKind, NetworkSpec, Task, DEFAULT_HIDDEN_RETAIN, DEFAULT_VARIANCE_FLOOR};
use crate::numerics::RngStream;
use crate::training::{Optimizer, TrainConfig, DEFAULT_ALPHAS, DEFAULT_CLIP_NORM};

/// Methods compared by default: every `k` of each family, GP added separately.
pub const DEFAULT_COMPARE_METHODS: [&str; 13] = [
    "rdeepsense",
    "rdeepsense-mc3",
    "rdeepsense-mc5",
    "rdeepsense-mc10",
    "rdeepsense-mc20",
    "mcdrop-3",
    "mcdrop-5",
    "mcdrop-10",
    "mcdrop-20",
    "ssp-1",
    "ssp-3",
    "ssp-5",
    "ssp-10",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub evaluate: EvalConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub gp: GpSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Heteroscedastic {
        n: usize,
    },
    Blobs {
        n: usize,
        classes: usize,
        separation: f64,
    },
    /// Relative paths resolve against the config file's directory.
    Csv {
        path: PathBuf,
        schema: CsvSchema,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn default_split() -> [f64; 3] {
    DEFAULT_SPLIT
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub input_retain: f64,
    pub hidden_retain: f64,
    pub variance_floor: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
            input_retain: 1.0,
            hidden_retain: DEFAULT_HIDDEN_RETAIN,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub alpha: f64,
    pub lambda_e: f64,
    pub lambda_l: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda_e: 0.0,
            lambda_l: 0.0,
        }
    }
}

/// Training settings shared by every model of a run. The seed comes from the
/// top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub early_stop_patience: usize,
    pub shuffle: bool,
    pub clip_norm: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            optimizer: t.optimizer,
            early_stop_patience: t.early_stop_patience,
            shuffle: t.shuffle,
            clip_norm: Some(DEFAULT_CLIP_NORM),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Confidence levels of the calibration curve; the standard grid if absent.
    pub z_levels: Option<Vec<f64>>,
    pub split: EvalSplit,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            z_levels: None,
            split: EvalSplit::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub methods: Vec<MethodSpec>,
    pub gp: bool,
    /// Test rows timed per method for the latency columns.
    pub latency_samples: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            methods: DEFAULT_COMPARE_METHODS
                .iter()
                .map(|m| m.parse().expect("default methods parse"))
                .collect(),
            gp: true,
            latency_samples: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub methods: Vec<MethodSpec>,
    pub samples: usize,
    pub repetitions: usize,
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: ["rdeepsense", "mcdrop-3", "mcdrop-5", "mcdrop-10", "mcdrop-20"]
                .iter()
                .map(|m| m.parse().expect("default methods parse"))
                .collect(),
            samples: 100,
            repetitions: 5,
            warmup: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: DEFAULT_ALPHAS.to_vec(),
        }
    }
}

/// GP hyperparameters; unset values default from the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSection {
    pub max_points: usize,
    pub signal_variance: Option<f64>,
    pub length_scale: Option<f64>,
    pub noise_variance: Option<f64>,
    pub jitter: f64,
}

impl Default for GpSection {
    fn default() -> Self {
        Self {
            max_points: 2_000,
            signal_variance: None,
            length_scale: None,
            noise_variance: None,
            jitter: DEFAULT_JITTER,
        }
    }
}

/// Stream ids for seeds derived from the run seed.
pub(crate) mod streams {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const RDEEPSENSE: u64 = 10;
    pub const MCDROP: u64 = 11;
    pub const SSP: u64 = 12;
    pub const SWEEP: u64 = 13;
    pub const EVAL: u64 = 20;
    pub const BENCH: u64 = 21;
}

impl RunConfig {
    /// Parses a TOML document; `base_dir` anchors relative CSV paths.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(one_line(&e.to_string())))?;
        if let DataSource::Csv { path, .. } = &mut cfg.data.source {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        match &self.data.source {
            DataSource::Heteroscedastic { n } | DataSource::Blobs { n, .. } if *n < 3 => {
                return Err(Error::invalid("data.source.n", "need at least 3 rows"));
            }
            DataSource::Blobs {
                classes,
                separation,
                ..
            } => {
                if *classes < 2 {
                    return Err(Error::invalid("data.source.classes", "need at least 2"));
                }
                if !(separation.is_finite() && *separation >= 0.0) {
                    return Err(Error::invalid("data.source.separation", "must be finite and >= 0"));
                }
            }
            DataSource::Csv { path, .. } => {
                if !path.is_file() {
                    return Err(Error::Config(format!("data file {} does not exist", path.display())));
                }
            }
            _ => {}
        }
        let sum: f64 = self.data.split.iter().sum();
        if self.data.split.iter().any(|f| !(0.0..=1.0).contains(f)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("data.split", format!("{:?} must be in [0,1] and sum to 1", self.data.split)));
        }
        if self.data.split[0] == 0.0 || self.data.split[1] == 0.0 {
            return Err(Error::invalid("data.split", "train and validation fractions must be > 0"));
        }
        self.spec(self.task(), false)?;
        self.loss_spec(self.task())?;
        self.train_config(0).validate()?;
        self.z_grid()?;
        for m in self.compare.methods.iter().chain(&self.bench.methods) {
            m.validate()?;
        }
        if self.compare.latency_samples == 0 {
            return Err(Error::invalid("compare.latency_samples", "must be at least 1"));
        }
        if self.bench.samples == 0 || self.bench.repetitions == 0 {
            return Err(Error::invalid("bench", "samples and repetitions must be at least 1"));
        }
        if self.sweep.alphas.is_empty() || self.sweep.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("sweep.alphas", "need one or more values in [0, 1]"));
        }
        if self.gp.max_points == 0 || self.gp.max_points > DEFAULT_MAX_POINTS {
            return Err(Error::invalid("gp.max_points", format!("must be in 1..={DEFAULT_MAX_POINTS}")));
        }
        for (name, v) in [
            ("gp.signal_variance", self.gp.signal_variance),
            ("gp.length_scale", self.gp.length_scale),
            ("gp.noise_variance", self.gp.noise_variance),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(name, "must be finite and > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        match &self.data.source {
            DataSource::Heteroscedastic { .. } => Task::Regression,
            DataSource::Blobs { .. } => Task::Classification,
            DataSource::Csv { schema, .. } => match schema.targets {
                crate::data::TargetColumns::Values(_) => Task::Regression,
                crate::data::TargetColumns::Class { .. } => Task::Classification,
            },
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.data.source {
            DataSource::Heteroscedastic { .. } => 1,
            DataSource::Blobs { .. } => 2,
            DataSource::Csv { schema, .. } => schema.features.len(),
        }
    }

    /// Target dimensions, or classes.
    pub fn outputs(&self) -> usize {
        match &self.data.source {
            DataSource::Heteroscedastic { .. } => 1,
            DataSource::Blobs { classes, .. } => *classes,
            DataSource::Csv { schema, .. } => match &schema.targets {
                crate::data::TargetColumns::Values(cols) => cols.len(),
                crate::data::TargetColumns::Class { num_classes, .. } => *num_classes,
            },
        }
    }

    /// Network for the task. `point` selects a point head (regression
    /// Monte-Carlo dropout baseline).
    pub fn spec(&self, task: Task, point: bool) -> Result<NetworkSpec> {
        let head = match (task, point) {
            (Task::Classification, _) => HeadKind::Softmax,
            (Task::Regression, true) => HeadKind::Point,
            (Task::Regression, false) => HeadKind::Gaussian,
        };
        let n = &self.network;
        let mut spec = NetworkSpec::mlp(
            self.input_dim(),
            &n.hidden,
            n.activation,
            head,
            self.outputs(),
            n.input_retain,
            n.hidden_retain,
        )?;
        spec.variance_floor = n.variance_floor;
        spec.validate()?;
        Ok(spec)
    }

    pub fn loss_spec(&self, task: Task) -> Result<LossSpec> {
        LossSpec::new(task, self.loss.alpha, self.loss.lambda_e, self.loss.lambda_l)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            optimizer: t.optimizer,
            seed,
            early_stop_patience: t.early_stop_patience,
            shuffle: t.shuffle,
            clip_norm: t.clip_norm,
        }
    }

    pub fn z_grid(&self) -> Result<ZGrid> {
        match &self.evaluate.z_levels {
            Some(levels) => ZGrid::new(levels.clone()),
            None => Ok(ZGrid::default()),
        }
    }

    pub fn derived_seed(&self, stream: u64) -> u64 {
        RngStream::new(self.seed, stream).next_u64()
    }

    /// SHA-256 of the effective configuration (output directory excluded).
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialization is infallible");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

pub(crate) fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
