//! Line-oriented `key=value` configuration files.
//!
//! The same tiny format feeds both the collection service and the analysis
//! pipeline. Blank lines and `#` comments are ignored; keys are
//! `snake_case`; values are bare strings. Unknown keys are hard errors so a
//! typo cannot silently fall back to a default.
//!
//! ```text
//! # service
//! bind_addr = 127.0.0.1:8080
//! storage_root = /var/lib/sigma
//! rate_limit_per_hour = 60
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::classify::ClassifierHypers;
use crate::cnn::TrainConfig;
use crate::mfcc::MfccConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("config line {line} is not `key = value`: {text}")]
    Malformed { line: usize, text: String },

    #[error("unknown config key `{key}` on line {line}")]
    UnknownKey { key: String, line: usize },

    #[error("config key `{key}` has invalid value `{value}` (expected {expected})")]
    BadValue { key: String, value: String, expected: String },
}

/// Parses `key = value` lines. Comments (`#`) and blank lines are skipped.
/// Returns `(line_number, key, value)` triples in file order.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let Some(eq) = stripped.find('=') else {
            return Err(ConfigError::Malformed { line, text: raw.trim().to_string() });
        };
        let key = stripped[..eq].trim();
        let value = stripped[eq + 1..].trim();
        if key.is_empty() {
            return Err(ConfigError::Malformed { line, text: raw.trim().to_string() });
        }
        pairs.push((line, key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

fn parse_number<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &str,
) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: expected.to_string(),
    })
}

/// Fallback coarse region allowlist used when no allowlist file is given.
/// Continental granularity — deliberately too coarse to identify anyone.
pub const DEFAULT_REGIONS: [&str; 5] = ["africa", "americas", "asia", "europe", "oceania"];

/// Configuration for the collection service.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    /// Address to listen on, e.g. `127.0.0.1:8080`. Port 0 picks a free one.
    pub bind_addr: String,
    /// Directory holding the content-addressed store.
    pub storage_root: PathBuf,
    /// Optional path to a file with one allowed region code per line.
    pub region_allowlist: Option<PathBuf>,
    /// Upload budget per client IP per hour.
    pub rate_limit_per_hour: u32,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind_addr: "127.0.0.1:8080".to_string(),
            storage_root: PathBuf::from("sigma-store"),
            region_allowlist: None,
            rate_limit_per_hour: 60,
        }
    }
}

impl ServiceConfig {
    /// Parses service settings from `key = value` text, rejecting unknown keys.
    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = ServiceConfig::default();
        for (line, key, value) in parse_kv(text)? {
            match key.as_str() {
                "bind_addr" => config.bind_addr = value,
                "storage_root" => config.storage_root = PathBuf::from(value),
                "region_allowlist" => config.region_allowlist = Some(PathBuf::from(value)),
                "rate_limit_per_hour" => {
                    config.rate_limit_per_hour =
                        parse_number(&key, &value, "a positive integer")?;
                }
                _ => return Err(ConfigError::UnknownKey { key, line }),
            }
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_kv_text(&text)
    }

    /// Loads the region allowlist: the configured file (one code per line,
    /// `#` comments allowed) or the built-in continental default.
    pub fn load_regions(&self) -> Result<BTreeSet<String>, ConfigError> {
        let Some(path) = &self.region_allowlist else {
            return Ok(DEFAULT_REGIONS.iter().map(|s| s.to_string()).collect());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.clone(), source: e })?;
        let mut regions = BTreeSet::new();
        for raw in text.lines() {
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let code = stripped.trim();
            if code.is_empty() {
                continue;
            }
            if !code.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-') {
                return Err(ConfigError::BadValue {
                    key: "region_allowlist".to_string(),
                    value: code.to_string(),
                    expected: "lowercase region codes (letters, digits, dashes)".to_string(),
                });
            }
            regions.insert(code.to_string());
        }
        if regions.is_empty() {
            return Err(ConfigError::BadValue {
                key: "region_allowlist".to_string(),
                value: path.display().to_string(),
                expected: "at least one region code".to_string(),
            });
        }
        Ok(regions)
    }
}

/// Configuration for the analysis pipeline (synthesis, training,
/// evaluation, prediction).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Directory for generated/ingested corpora.
    pub corpus_root: PathBuf,
    /// Path of the trained digit-network checkpoint.
    pub checkpoint: PathBuf,
    /// Directory receiving evaluation reports and plots.
    pub report_dir: PathBuf,
    /// Master seed for synthesis, training, and fold shuffling.
    pub rng_seed: u64,
    /// Samples generated per class by `synth`.
    pub n_per_class: usize,
    /// Cross-validation fold count for `evaluate`.
    pub folds: usize,
    pub mfcc: MfccConfig,
    pub train: TrainConfig,
    pub hypers: ClassifierHypers,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_root: PathBuf::from("corpus"),
            checkpoint: PathBuf::from("digits-cnn.json"),
            report_dir: PathBuf::from("reports"),
            rng_seed: 42,
            n_per_class: 100,
            folds: 5,
            mfcc: MfccConfig::default(),
            train: TrainConfig::default(),
            hypers: ClassifierHypers::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses pipeline settings from `key = value` text, rejecting unknown keys.
    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = PipelineConfig::default();
        for (line, key, value) in parse_kv(text)? {
            match key.as_str() {
                "corpus_root" => config.corpus_root = PathBuf::from(value),
                "checkpoint" => config.checkpoint = PathBuf::from(value),
                "report_dir" => config.report_dir = PathBuf::from(value),
                "seed" => config.rng_seed = parse_number(&key, &value, "an unsigned integer")?,
                "n_per_class" => {
                    config.n_per_class = parse_number(&key, &value, "a positive integer")?;
                }
                "folds" => config.folds = parse_number(&key, &value, "an integer >= 2")?,
                // MFCC overrides.
                "pre_emphasis" => {
                    config.mfcc.pre_emphasis = parse_number(&key, &value, "a number")?;
                }
                "n_mel_filters" => {
                    config.mfcc.n_mel_filters = parse_number(&key, &value, "a positive integer")?;
                }
                "n_coefficients" => {
                    config.mfcc.n_coefficients =
                        parse_number(&key, &value, "a positive integer")?;
                }
                // Training overrides.
                "learning_rate" => {
                    config.train.learning_rate = parse_number(&key, &value, "a number")?;
                }
                "momentum" => config.train.momentum = parse_number(&key, &value, "a number")?,
                "batch_size" => {
                    config.train.batch_size = parse_number(&key, &value, "a positive integer")?;
                }
                "epochs" => config.train.epochs = parse_number(&key, &value, "an integer")?,
                "weight_init_scale" => {
                    config.train.weight_init_scale = parse_number(&key, &value, "a number")?;
                }
                // Classifier hyperparameters.
                "knn_k" => config.hypers.knn_k = parse_number(&key, &value, "an odd integer")?,
                "logreg_learning_rate" => {
                    config.hypers.logreg.learning_rate = parse_number(&key, &value, "a number")?;
                }
                "logreg_epochs" => {
                    config.hypers.logreg.epochs = parse_number(&key, &value, "an integer")?;
                }
                "logreg_l2" => config.hypers.logreg.l2 = parse_number(&key, &value, "a number")?,
                "svm_learning_rate" => {
                    config.hypers.svm.learning_rate = parse_number(&key, &value, "a number")?;
                }
                "svm_epochs" => {
                    config.hypers.svm.epochs = parse_number(&key, &value, "an integer")?;
                }
                "svm_c" => config.hypers.svm.c = parse_number(&key, &value, "a number")?,
                "forest_trees" => {
                    config.hypers.forest.n_trees = parse_number(&key, &value, "an integer")?;
                }
                "forest_max_depth" => {
                    config.hypers.forest.max_depth = parse_number(&key, &value, "an integer")?;
                }
                "forest_min_leaf" => {
                    config.hypers.forest.min_leaf = parse_number(&key, &value, "an integer")?;
                }
                _ => return Err(ConfigError::UnknownKey { key, line }),
            }
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_kv_text(&text)
    }
}
