//! Run configuration as flat `key = value` text.
//!
//! Keys match the long CLI flags. Resolution order, lowest to highest:
//! built-in defaults, the config file, then command-line flags. β has no
//! fixed default: when unset it follows the distance metric.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::distance::{DistanceKind, DEFAULT_EPSILON};
use crate::error::{Result, SagcnError};
use crate::evaluation::DEFAULT_CUTOFFS;
use crate::propagation::{Aggregator, FusionConfig, DEFAULT_ALPHA, DEFAULT_DIM, DEFAULT_LAYERS};
use crate::training::TrainConfig;

use super::split::SplitSpec;

/// α values swept by default.
pub const ALPHA_GRID: [f64; 7] = [0.5, 0.8, 1.0, 1.2, 1.5, 2.0, 5.0];

pub const DEFAULT_MAX_EPOCHS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub aggregator: Aggregator,
    pub distance: DistanceKind,
    pub alpha: f64,
    /// `None` means the metric's default.
    pub beta: Option<f64>,
    pub epsilon: f64,
    pub layers: usize,
    pub dim: usize,
    pub lr: f64,
    pub reg: f64,
    pub batch: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub cutoffs: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let s = SplitSpec::default();
        Self {
            data: None,
            out: PathBuf::from("runs"),
            train_fraction: s.train_fraction,
            valid_fraction: s.validation_fraction,
            aggregator: Aggregator::SelfAdaptive,
            distance: DistanceKind::Euclidean,
            alpha: DEFAULT_ALPHA,
            beta: None,
            epsilon: DEFAULT_EPSILON,
            layers: DEFAULT_LAYERS,
            dim: DEFAULT_DIM,
            lr: t.learning_rate,
            reg: t.reg_lambda,
            batch: t.batch_size,
            epochs: DEFAULT_MAX_EPOCHS,
            patience: t.patience,
            seed: t.seed,
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| SagcnError::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

pub fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(SagcnError::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

impl RunConfig {
    pub fn effective_beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| self.distance.default_beta())
    }

    /// Sets one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "train_fraction" | "train_frac" => self.train_fraction = parse_num(&key, value)?,
            "valid_fraction" | "valid_frac" => self.valid_fraction = parse_num(&key, value)?,
            "aggregator" => self.aggregator = value.parse()?,
            "distance" => self.distance = value.parse()?,
            "alpha" => self.alpha = parse_num(&key, value)?,
            "beta" => {
                self.beta = match value {
                    "" | "auto" => None,
                    v => Some(parse_num(&key, v)?),
                }
            }
            "epsilon" => self.epsilon = parse_num(&key, value)?,
            "layers" => self.layers = parse_num(&key, value)?,
            "dim" => self.dim = parse_num(&key, value)?,
            "lr" => self.lr = parse_num(&key, value)?,
            "reg" => self.reg = parse_num(&key, value)?,
            "batch" => self.batch = parse_num(&key, value)?,
            "epochs" => self.epochs = parse_num(&key, value)?,
            "patience" => self.patience = parse_num(&key, value)?,
            "seed" => self.seed = parse_num(&key, value)?,
            "k" | "cutoffs" => self.cutoffs = parse_list(&key, value)?,
            other => return Err(SagcnError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SagcnError::Config(format!("{}:{}: expected `key = value`", origin.display(), n + 1))
            })?;
            self.set(key, value)
                .map_err(|e| SagcnError::Config(format!("{}:{}: {e}", origin.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SagcnError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            alpha: self.alpha,
            beta: self.effective_beta(),
            distance: self.distance,
            epsilon: self.epsilon,
            num_layers: self.layers,
            aggregator: self.aggregator,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            reg_lambda: self.reg,
            batch_size: self.batch,
            max_epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            validation_fraction: self.valid_fraction,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion().validate()?;
        self.train_config().validate()?;
        self.split_spec().validate()?;
        if self.dim == 0 {
            return Err(SagcnError::Config("dim must be >= 1".into()));
        }
        if self.cutoffs.contains(&0) {
            return Err(SagcnError::Config("cutoffs must be positive".into()));
        }
        Ok(())
    }

    /// Every key except `out`, one per line, in a fixed order.
    fn model_kv(&self) -> String {
        let mut s = String::new();
        let data = self.data.as_deref().map(|p| p.display().to_string()).unwrap_or_default();
        let cutoffs: Vec<String> = self.cutoffs.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "data = {data}");
        let _ = writeln!(s, "train_fraction = {}", self.train_fraction);
        let _ = writeln!(s, "valid_fraction = {}", self.valid_fraction);
        let _ = writeln!(s, "aggregator = {}", self.aggregator);
        let _ = writeln!(s, "distance = {}", self.distance);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "beta = {}", self.effective_beta());
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "layers = {}", self.layers);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "reg = {}", self.reg);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "k = {}", cutoffs.join(","));
        s
    }

    /// Full config as `key = value` text; parses back through [`apply_text`].
    ///
    /// [`apply_text`]: RunConfig::apply_text
    pub fn to_kv(&self) -> String {
        format!("out = {}\n{}", self.out.display(), self.model_kv())
    }

    /// First 8 bytes (little-endian) of SHA-256 over the config text,
    /// excluding the output directory.
    pub fn config_hash(&self) -> u64 {
        let digest = Sha256::digest(self.model_kv().as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}
