//! Audit configuration: JSON file format, defaults, validation, and the
//! content hash embedded in every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::SubsampleMode;
use crate::shap::ShapConfig;
use crate::similarity::MasMode;
use crate::stats::PValueMethod;
use crate::synthetic::PlantedSpec;
use crate::zoo::Family;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config {path}, line {line}, column {column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Single delimited file, split by `test_fraction`.
    pub path: Option<PathBuf>,
    /// Explicit test file; `path` is then the training file.
    pub test_path: Option<PathBuf>,
    /// Generate a planted-importance dataset instead of reading a file.
    pub synthetic: Option<PlantedSpec>,
    pub label_column: String,
    pub delimiter: char,
    pub positive_label: Option<String>,
    pub negative_label: Option<String>,
    pub impute_mean: bool,
    pub one_hot: bool,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            test_path: None,
            synthetic: None,
            label_column: "label".into(),
            delimiter: ',',
            positive_label: None,
            negative_label: None,
            impute_mean: false,
            one_hot: false,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Explicit sizes; defaults to powers of two up to the train size.
    pub sizes: Option<Vec<usize>>,
    pub subsample: SubsampleMode,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { sizes: None, subsample: SubsampleMode::Nested }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapOptions {
    pub background: usize,
    pub mean_background: bool,
    pub nsamples: usize,
    pub enumeration_threshold: usize,
    /// Explain a seeded subset of this many test rows (all rows when unset).
    pub explain_rows: Option<usize>,
}

impl Default for ShapOptions {
    fn default() -> Self {
        let d = ShapConfig::default();
        ShapOptions {
            background: d.background,
            mean_background: d.mean_background,
            nsamples: d.nsamples,
            enumeration_threshold: d.enumeration_threshold,
            explain_rows: None,
        }
    }
}

impl ShapOptions {
    pub fn engine(&self, seed: u64) -> ShapConfig {
        ShapConfig {
            background: self.background,
            mean_background: self.mean_background,
            nsamples: self.nsamples,
            enumeration_threshold: self.enumeration_threshold,
            seed,
        }
    }
}

/// How inter-model agreement pairs fold results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Average each model's importance over folds, then compare models.
    #[default]
    FoldAverage,
    /// Compare models fold by fold, then average.
    PerFold,
}

/// Whether top-j compares global rankings or per-instance rankings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopJMode {
    #[default]
    Population,
    PerInstance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilarityOptions {
    pub top_j: Vec<usize>,
    pub mas: MasMode,
    pub pairing: Pairing,
    pub top_j_mode: TopJMode,
}

impl Default for SimilarityOptions {
    fn default() -> Self {
        SimilarityOptions { top_j: vec![1, 3, 5], mas: MasMode::Group, pairing: Pairing::FoldAverage, top_j_mode: TopJMode::Population }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub data: DataConfig,
    pub seed: u64,
    pub folds: usize,
    pub top_k: usize,
    pub epsilon: f64,
    pub grid: GridConfig,
    pub families: Vec<Family>,
    pub budget: usize,
    pub shap: ShapOptions,
    pub similarity: SimilarityOptions,
    pub alpha: f64,
    pub p_value: PValueMethod,
    pub bagging: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            data: DataConfig::default(),
            seed: 0,
            folds: 10,
            top_k: 3,
            epsilon: 0.05,
            grid: GridConfig::default(),
            families: Family::ALL.to_vec(),
            budget: 20,
            shap: ShapOptions::default(),
            similarity: SimilarityOptions::default(),
            alpha: 0.05,
            p_value: PValueMethod::Auto,
            bagging: true,
        }
    }
}

impl AuditConfig {
    /// Parses without validating, so callers can layer overrides first.
    pub fn parse_json_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg = Self::parse_json_str(text, origin)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse_json_str(&text, &path.display().to_string())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let cfg = Self::parse_file(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) => return bad("data.path and data.synthetic are mutually exclusive".into()),
            (None, None) => return bad("one of data.path or data.synthetic is required".into()),
            _ => {}
        }
        if self.data.test_path.is_some() && self.data.path.is_none() {
            return bad("data.test_path requires data.path".into());
        }
        if !self.data.delimiter.is_ascii() {
            return bad(format!("delimiter {:?} must be a single ASCII character", self.data.delimiter));
        }
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return bad(format!("data.test_fraction = {} must lie in (0, 1)", self.data.test_fraction));
        }
        if self.folds < 2 {
            return bad(format!("folds = {} must be at least 2", self.folds));
        }
        if self.top_k < 2 {
            return bad(format!("top_k = {} must be at least 2", self.top_k));
        }
        if self.families.len() < self.top_k {
            return bad(format!("{} families listed but top_k = {}", self.families.len(), self.top_k));
        }
        let mut fams = self.families.clone();
        fams.sort();
        fams.dedup();
        if fams.len() != self.families.len() {
            return bad("families contains duplicates".into());
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon = {} must be non-negative", self.epsilon));
        }
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if self.shap.background == 0 {
            return bad("shap.background must be at least 1".into());
        }
        if self.shap.enumeration_threshold > 20 {
            return bad("shap.enumeration_threshold above 20 is not supported".into());
        }
        if self.shap.explain_rows == Some(0) {
            return bad("shap.explain_rows must be positive".into());
        }
        if let Some(sizes) = &self.grid.sizes {
            if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] < crate::data::MIN_GRID_SIZE {
                return bad("grid.sizes must be strictly ascending and start at 16 or above".into());
            }
        }
        if self.similarity.top_j.contains(&0) {
            return bad("similarity.top_j entries must be positive".into());
        }
        Ok(())
    }

    /// Canonical JSON of the resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
