//! Sample-size audit of Shapley explanations across a Rashōmon set of
//! classifiers.
//!
//! The crate is organised bottom-up: [`data`] loads and partitions a binary
//! classification table, [`zoo`] trains the candidate model families,
//! [`select`] tunes them and picks the top performers, [`shap`] explains
//! them, [`similarity`] and [`stats`] measure how explanations agree as the
//! training size grows, and [`pipeline`] / [`report`] tie it all together.

pub mod config;
pub mod data;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod select;
pub mod shap;
pub mod similarity;
pub mod stats;
pub mod synthetic;
pub mod zoo;

pub use config::{AuditConfig, ConfigError};
pub use data::{Dataset, FoldPlan, SampleGrid, SplitPlan, SubsampleMode};
pub use metrics::{ConfusionCounts, PerfRecord};
pub use pipeline::{AgreementSeries, CellStatus, SweepCell};
pub use select::{RashomonSet, SelectionResult};
pub use shap::{Attribution, GlobalImportance, ShapConfig};
pub use similarity::{ConsensusVector, MasMode};
pub use stats::{CorrelationResult, PValueMethod};
pub use zoo::{BaggingEnsemble, Classifier, Family, ModelSpec, TrainedModel};
