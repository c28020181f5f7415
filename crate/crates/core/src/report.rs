//! End-to-end runs and their on-disk artifacts.
//!
//! A run directory holds JSON records, each wrapped in an envelope carrying
//! the schema version, the resolved-config hash and the record kind:
//!
//! | file                   | kind          |
//! |------------------------|---------------|
//! | `config.resolved.json` | `config`      |
//! | `selection.json`       | `selection`   |
//! | `selection.csv`        | (mirror)      |
//! | `cells.json`           | `cells`       |
//! | `attributions.json`    | `attributions`|
//! | `series.json`          | `series`      |
//! | `correlations.json`    | `correlations`|
//! | `summary.json`         | `summary`     |
//!
//! [`write_report`] turns one or more run directories into delimited tables
//! and plot-data bundles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AuditConfig, ConfigError};
use crate::data::{self, DataError, Dataset, IngestOptions, SampleGrid, SplitPlan};
use crate::metrics::{self, PerfRecord};
use crate::pipeline::{
    self, build_series, correlation_tables, finish_table, performance_summary, CellOutput, CellStatus,
    CorrelationRow, CorrelationTable, CorrelationTables, PerfSummary, PipelineError, SeriesBundle, SeriesOptions,
    SweepCell, SweepConfig, SweepInputs,
};
use crate::select::{self, rashomon_membership, RashomonSet, SelectError, SelectOptions, SelectionResult};
use crate::shap::ShapMode;
use crate::synthetic;
use crate::zoo::{self, Classifier, ModelSpec, ZooError};

pub const SCHEMA_VERSION: &str = "rashomon-audit/1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("no run found at {0} (missing {1})")]
    MissingRun(String, String),
    #[error("{file}: schema `{found}` is not supported (expected `{SCHEMA_VERSION}`)")]
    SchemaMismatch { file: String, found: String },
    #[error("{file} was produced by config {found}, but the run's config hash is {expected}")]
    ConfigMismatch { file: String, expected: String, found: String },
    #[error("{file}: expected a `{expected}` record, found `{found}`")]
    WrongKind { file: String, expected: String, found: String },
    #[error("{file}: {message}")]
    Malformed { file: String, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("baseline model: {0}")]
    Baseline(#[from] ZooError),
    #[error("grid size {size} exceeds the {available} training rows")]
    GridTooLarge { size: usize, available: usize },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Header shared by every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: String,
    pub config_hash: String,
    pub kind: String,
    pub data: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(config_hash: &str, kind: &str, data: T) -> Self {
        Envelope { schema_version: SCHEMA_VERSION.into(), config_hash: config_hash.into(), kind: kind.into(), data }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }
}

#[derive(Deserialize)]
struct Header {
    schema_version: String,
    kind: String,
}

/// Parses an artifact, checking schema version and kind.
pub fn parse_artifact<T: DeserializeOwned>(text: &str, file: &str, kind: &str) -> Result<Envelope<T>, ReportError> {
    let malformed = |e: serde_json::Error| ReportError::Malformed { file: file.into(), message: e.to_string() };
    let header: Header = serde_json::from_str(text).map_err(malformed)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(ReportError::SchemaMismatch { file: file.into(), found: header.schema_version });
    }
    if header.kind != kind {
        return Err(ReportError::WrongKind { file: file.into(), expected: kind.into(), found: header.kind });
    }
    serde_json::from_str(text).map_err(malformed)
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_artifact<T: Serialize>(dir: &Path, file: &str, hash: &str, kind: &str, data: T) -> Result<(), ReportError> {
    write_file(&dir.join(file), &Envelope::new(hash, kind, data).to_json())
}

// ---------------------------------------------------------------------------
// Delimited text

/// Delimited table with a comment header carrying provenance.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn render(&self, delimiter: u8, hash: &str, kind: &str) -> String {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        format!("# schema_version={SCHEMA_VERSION} config_hash={hash} kind={kind}\n{body}")
    }
}

/// Shortest representation that parses back to the same f64.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Data and selection

/// Loads or generates the dataset and its train/test partition.
pub fn prepare_data(cfg: &AuditConfig) -> Result<(Dataset, SplitPlan), ReportError> {
    let dc = &cfg.data;
    let split_seed = crate::seed!(cfg.seed, "split");
    if let Some(spec) = &dc.synthetic {
        let d = synthetic::planted(spec)?;
        let split = data::make_split(&d, dc.test_fraction, split_seed)?;
        return Ok((d, split));
    }
    let path = dc.path.as_ref().expect("validated config has a path");
    let opts = IngestOptions {
        delimiter: dc.delimiter as u8,
        positive_label: dc.positive_label.clone(),
        negative_label: dc.negative_label.clone(),
        impute_mean: dc.impute_mean,
        one_hot: dc.one_hot,
    };
    match &dc.test_path {
        Some(test) => Ok(data::load_pair(path, test, &dc.label_column, &opts)?),
        None => {
            let d = data::load_dataset(path, &dc.label_column, &opts)?;
            let split = data::make_split(&d, dc.test_fraction, split_seed)?;
            Ok((d, split))
        }
    }
}

pub fn resolve_grid(cfg: &AuditConfig, split: &SplitPlan) -> Result<SampleGrid, ReportError> {
    let available = split.train_indices.len();
    match &cfg.grid.sizes {
        Some(sizes) => {
            if let Some(&size) = sizes.iter().find(|&&s| s > available) {
                return Err(ReportError::GridTooLarge { size, available });
            }
            Ok(SampleGrid { sizes: sizes.clone() })
        }
        None => Ok(data::make_grid(available)?),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub result: SelectionResult,
    pub rashomon: RashomonSet,
    pub dataset: String,
    pub data_digest: String,
}

impl SelectionArtifact {
    pub fn top_ids(&self) -> Vec<String> {
        self.result.top.iter().map(|s| s.family.name().to_string()).collect()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["rank", "family", "hyperparameters", "mean_kappa", "sd_kappa", "rashomon_member", "selected"]);
        let member = |s: &ModelSpec| self.rashomon.members.iter().any(|m| m.family == s.family);
        for (i, m) in self.result.ranked.iter().enumerate() {
            t.rows.push(vec![
                (i + 1).to_string(),
                m.spec.family.name().into(),
                serde_json::to_string(&m.spec.hyperparams).expect("map serializes"),
                num(m.mean_kappa),
                num(m.sd_kappa),
                member(&m.spec).to_string(),
                self.result.top.iter().any(|s| s.family == m.spec.family).to_string(),
            ]);
        }
        for f in &self.result.failures {
            t.rows.push(vec![
                String::new(),
                f.family.name().into(),
                format!("failed: {}", f.reason),
                String::new(),
                String::new(),
                "false".into(),
                "false".into(),
            ]);
        }
        t
    }
}

pub fn run_selection(cfg: &AuditConfig, d: &Dataset, split: &SplitPlan) -> Result<SelectionArtifact, ReportError> {
    let train = &split.train_indices;
    let x = d.rows(train);
    let y = d.labels_at(train);
    let folds = data::make_folds(train.len(), &y, cfg.folds, crate::seed!(cfg.seed, "select-folds"))?;
    let opts = SelectOptions { budget: cfg.budget, seed: cfg.seed, top_k: cfg.top_k };
    let result = select::select(x.view(), &y, &cfg.families, &folds, opts)?;
    let rashomon = rashomon_membership(&result, cfg.epsilon)?;
    if !rashomon.top_within {
        log::warn!("not every selected model lies within the Rashomon set at epsilon = {}", cfg.epsilon);
    }
    Ok(SelectionArtifact { result, rashomon, dataset: d.name.clone(), data_digest: d.digest() })
}

pub fn build_pool(workers: usize) -> Result<rayon::ThreadPool, ReportError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| ReportError::Pool(e.to_string()))
}

// ---------------------------------------------------------------------------
// Audit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub model: String,
    pub size: usize,
    pub fold: usize,
    pub base: f64,
    pub mode: ShapMode,
    pub explained_output: String,
    pub outputs: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesArtifact {
    pub sizes: Vec<usize>,
    pub models: Vec<String>,
    pub series: SeriesBundle,
    pub performance: Vec<PerfSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub ok: usize,
    pub repaired_shrinkage: usize,
    pub non_converged: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: String,
    pub data_digest: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub explained_rows: usize,
    pub selected: Vec<String>,
    pub baseline_test: PerfRecord,
    pub cells: StatusCounts,
    pub intra: CorrelationTable,
    pub warnings: Vec<String>,
}

/// In-memory result of [`run_audit`]; everything here is also on disk.
#[derive(Debug, Clone)]
pub struct AuditRun {
    pub dir: PathBuf,
    pub config_hash: String,
    pub selection: SelectionArtifact,
    pub cells: Vec<SweepCell>,
    pub series: SeriesArtifact,
    pub correlations: CorrelationTables,
    pub summary: Summary,
}

impl AuditRun {
    pub fn warnings(&self) -> &[String] {
        &self.summary.warnings
    }
}

fn sweep_config(cfg: &AuditConfig) -> SweepConfig {
    SweepConfig {
        seed: cfg.seed,
        folds: cfg.folds,
        subsample: cfg.grid.subsample,
        shap: cfg.shap.engine(0),
        explain_rows: cfg.shap.explain_rows,
        bagging: cfg.bagging,
    }
}

fn count_statuses(cells: &[SweepCell]) -> StatusCounts {
    let mut c = StatusCounts { ok: 0, repaired_shrinkage: 0, non_converged: 0, failed: 0 };
    for cell in cells {
        match cell.status {
            CellStatus::Ok => c.ok += 1,
            CellStatus::RepairedShrinkage => c.repaired_shrinkage += 1,
            CellStatus::NonConverged => c.non_converged += 1,
            CellStatus::Failed { .. } => c.failed += 1,
        }
    }
    c
}

/// Logistic regression with default settings, fitted on the full training
/// partition and scored on the test partition.
pub fn baseline_test_performance(d: &Dataset, split: &SplitPlan, spec: &ModelSpec) -> Result<PerfRecord, ReportError> {
    let m = zoo::train(spec, d.rows(&split.train_indices).view(), &d.labels_at(&split.train_indices))?;
    let x_test = d.rows(&split.test_indices);
    let p = m.positive_unchecked(x_test.view());
    Ok(metrics::score_probabilities(&d.labels_at(&split.test_indices), &p).expect("lengths agree"))
}

/// Selection, sweep, series, correlations and summary, written to `dir`.
/// `selection` skips model selection when a previous result is supplied.
pub fn run_audit(
    cfg: &AuditConfig,
    dir: &Path,
    workers: usize,
    selection: Option<SelectionArtifact>,
) -> Result<AuditRun, ReportError> {
    cfg.validate()?;
    let pool = build_pool(workers)?;
    pool.install(|| audit_inner(cfg, dir, selection))
}

fn audit_inner(cfg: &AuditConfig, dir: &Path, selection: Option<SelectionArtifact>) -> Result<AuditRun, ReportError> {
    let hash = cfg.hash();
    let (d, split) = prepare_data(cfg)?;
    let grid = resolve_grid(cfg, &split)?;
    let selection = match selection {
        Some(s) => s,
        None => run_selection(cfg, &d, &split)?,
    };
    let top = selection.top_ids();
    log::info!("selected models: {}", top.join(", "));

    let inputs = SweepInputs { data: &d, split: &split, models: &selection.result.top, grid: &grid };
    let scfg = sweep_config(cfg);
    let outputs = pipeline::run_sweep(&inputs, &scfg);
    let opts = SeriesOptions {
        mas: cfg.similarity.mas,
        pairing: cfg.similarity.pairing,
        top_j: &cfg.similarity.top_j,
        top_j_mode: cfg.similarity.top_j_mode,
    };
    let bundle = build_series(&outputs, &top, &grid.sizes, &opts)?;
    let correlations = correlation_tables(&bundle, &top, cfg.alpha, cfg.p_value);
    let cells: Vec<SweepCell> = outputs.iter().map(|o| o.cell.clone()).collect();
    let models = inputs.model_ids(cfg.bagging);
    let performance = performance_summary(&cells, &models, &grid.sizes);
    let baseline_test = baseline_test_performance(&d, &split, &selection.result.baseline.spec)?;

    let counts = count_statuses(&cells);
    let mut warnings = Vec::new();
    if !selection.rashomon.top_within {
        warnings.push(format!("selected models are not all within the Rashomon set at epsilon = {}", cfg.epsilon));
    }
    for f in &selection.result.failures {
        warnings.push(format!("family {} failed during selection: {}", f.family, f.reason));
    }
    if counts.repaired_shrinkage > 0 {
        warnings.push(format!("{} cells needed a covariance repair", counts.repaired_shrinkage));
    }
    if counts.non_converged > 0 {
        warnings.push(format!("{} cells did not converge; they are kept in the series", counts.non_converged));
    }
    for c in cells.iter().filter(|c| !c.status.usable()) {
        if let CellStatus::Failed { reason } = &c.status {
            warnings.push(format!("cell {} s={} fold={} failed: {reason}", c.model, c.size, c.fold));
        }
    }
    warnings.extend(bundle.notes.iter().cloned());
    for w in &warnings {
        log::warn!("{w}");
    }

    let explained_rows = pipeline::explain_indices(&split.test_indices, cfg.shap.explain_rows, cfg.seed).len();
    let summary = Summary {
        dataset: d.name.clone(),
        data_digest: d.digest(),
        n_train: split.train_indices.len(),
        n_test: split.test_indices.len(),
        n_features: d.n_features(),
        explained_rows,
        selected: top.clone(),
        baseline_test,
        cells: counts,
        intra: correlations.intra.clone(),
        warnings,
    };
    let series = SeriesArtifact { sizes: grid.sizes.clone(), models, series: bundle, performance };

    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_artifact(dir, "config.resolved.json", &hash, "config", cfg)?;
    write_selection(dir, &hash, &selection)?;
    write_artifact(dir, "cells.json", &hash, "cells", &cells)?;
    let attributions: Vec<AttributionRecord> = outputs.iter().filter_map(attribution_record).collect();
    let env = Envelope::new(&hash, "attributions", &attributions);
    let mut text = serde_json::to_string(&env).expect("artifact serializes");
    text.push('\n');
    write_file(&dir.join("attributions.json"), &text)?;
    write_artifact(dir, "series.json", &hash, "series", &series)?;
    write_artifact(dir, "correlations.json", &hash, "correlations", &correlations)?;
    write_artifact(dir, "summary.json", &hash, "summary", &summary)?;

    Ok(AuditRun { dir: dir.to_path_buf(), config_hash: hash, selection, cells, series, correlations, summary })
}

fn attribution_record(o: &CellOutput) -> Option<AttributionRecord> {
    let a = o.attribution.as_ref()?;
    Some(AttributionRecord {
        model: o.cell.model.clone(),
        size: o.cell.size,
        fold: o.cell.fold,
        base: a.base,
        mode: a.mode,
        explained_output: a.explained_output.clone(),
        outputs: a.outputs.clone(),
        values: pipeline::attribution_rows(a),
    })
}

pub fn write_selection(dir: &Path, hash: &str, s: &SelectionArtifact) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_artifact(dir, "selection.json", hash, "selection", s)?;
    write_file(&dir.join("selection.csv"), &s.table().render(b',', hash, "selection"))
}

/// Model selection only.
pub fn run_select(cfg: &AuditConfig, dir: &Path, workers: usize) -> Result<SelectionArtifact, ReportError> {
    cfg.validate()?;
    let pool = build_pool(workers)?;
    pool.install(|| {
        let (d, split) = prepare_data(cfg)?;
        let s = run_selection(cfg, &d, &split)?;
        let hash = cfg.hash();
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_artifact(dir, "config.resolved.json", &hash, "config", cfg)?;
        write_selection(dir, &hash, &s)?;
        Ok(s)
    })
}

// ---------------------------------------------------------------------------
// Loading runs

fn read_text(dir: &Path, file: &str) -> Result<Option<String>, ReportError> {
    let p = dir.join(file);
    match std::fs::read_to_string(&p) {
        Ok(t) => Ok(Some(t)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(&p, e)),
    }
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: AuditConfig,
    pub config_hash: String,
    pub selection: Option<SelectionArtifact>,
    pub cells: Option<Vec<SweepCell>>,
    pub series: Option<SeriesArtifact>,
    pub correlations: Option<CorrelationTables>,
    pub summary: Option<Summary>,
}

fn load_part<T: DeserializeOwned>(dir: &Path, file: &str, kind: &str, hash: &str) -> Result<Option<T>, ReportError> {
    let Some(text) = read_text(dir, file)? else {
        return Ok(None);
    };
    let label = dir.join(file).display().to_string();
    let env: Envelope<T> = parse_artifact(&text, &label, kind)?;
    if env.config_hash != hash {
        return Err(ReportError::ConfigMismatch { file: label, expected: hash.into(), found: env.config_hash });
    }
    Ok(Some(env.data))
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, ReportError> {
    let Some(text) = read_text(dir, "config.resolved.json")? else {
        return Err(ReportError::MissingRun(dir.display().to_string(), "config.resolved.json".into()));
    };
    let label = dir.join("config.resolved.json").display().to_string();
    let env: Envelope<AuditConfig> = parse_artifact(&text, &label, "config")?;
    let hash = env.data.hash();
    if env.config_hash != hash {
        return Err(ReportError::ConfigMismatch { file: label, expected: hash, found: env.config_hash });
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        selection: load_part(dir, "selection.json", "selection", &hash)?,
        cells: load_part(dir, "cells.json", "cells", &hash)?,
        series: load_part(dir, "series.json", "series", &hash)?,
        correlations: load_part(dir, "correlations.json", "correlations", &hash)?,
        summary: load_part(dir, "summary.json", "summary", &hash)?,
        config: env.data,
        config_hash: hash,
    })
}

/// Re-runs one cell of a completed selection, reproducing the sweep's output.
pub fn run_cell(
    cfg: &AuditConfig,
    selection: &SelectionArtifact,
    model: &str,
    size: usize,
    fold: usize,
) -> Result<CellOutput, ReportError> {
    cfg.validate()?;
    let (d, split) = prepare_data(cfg)?;
    let grid = resolve_grid(cfg, &split)?;
    let inputs = SweepInputs { data: &d, split: &split, models: &selection.result.top, grid: &grid };
    Ok(pipeline::run_single_cell(&inputs, &sweep_config(cfg), model, size, fold)?)
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    #[default]
    Csv,
    Tsv,
}

impl TableFormat {
    fn delimiter(self) -> u8 {
        match self {
            TableFormat::Csv => b',',
            TableFormat::Tsv => b'\t',
        }
    }

    fn ext(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Tsv => "tsv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y_sd: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotBundle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Per dataset, the plotted series.
    pub panels: BTreeMap<String, Vec<PlotSeries>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn corr_table(rows: &[(String, CorrelationRow)], power_method: &str) -> Table {
    let mut t = Table::new(&["dataset", "label", "series", "n", "r", "p", "p_cor", "power", "note"]);
    for (ds, r) in rows {
        let res = r.result.as_ref();
        t.rows.push(vec![
            ds.clone(),
            r.label.clone(),
            r.series.clone(),
            res.map(|c| c.n.to_string()).unwrap_or_default(),
            opt_num(res.map(|c| c.r)),
            opt_num(res.map(|c| c.p)),
            opt_num(res.map(|c| c.p_cor)),
            opt_num(res.map(|c| c.power)),
            r.note.clone().unwrap_or_else(|| format!("power: {power_method}")),
        ]);
    }
    t
}

/// Merges the same table across runs. With more than one run, BH is
/// re-applied over the merged family.
fn merge_tables(name: &str, parts: &[(String, &CorrelationTable)]) -> (Vec<(String, CorrelationRow)>, String) {
    let method = parts.first().map_or(pipeline::POWER_METHOD.to_string(), |(_, t)| t.power_method.clone());
    if parts.len() == 1 {
        let (ds, t) = &parts[0];
        return (t.rows.iter().map(|r| (ds.clone(), r.clone())).collect(), method);
    }
    let mut rows = Vec::new();
    let mut owners = Vec::new();
    for (ds, t) in parts {
        for r in &t.rows {
            owners.push(ds.clone());
            rows.push(r.clone());
        }
    }
    let merged = finish_table(name, rows);
    (owners.into_iter().zip(merged.rows).collect(), method)
}

fn dataset_key(summary: &Summary, seen: &mut BTreeMap<String, usize>) -> String {
    let n = seen.entry(summary.dataset.clone()).or_insert(0);
    *n += 1;
    if *n == 1 {
        summary.dataset.clone()
    } else {
        format!("{}#{}", summary.dataset, n)
    }
}

/// Writes delimited tables under `out/tables` and plot-data bundles under
/// `out/plots` from one or more run directories.
pub fn write_report(runs: &[PathBuf], out: &Path, format: TableFormat) -> Result<ReportOutcome, ReportError> {
    let mut warnings = Vec::new();
    let mut loaded = Vec::new();
    let mut seen = BTreeMap::new();
    for dir in runs {
        let run = load_run(dir)?;
        let Some(summary) = run.summary.clone() else {
            return Err(ReportError::MissingRun(dir.display().to_string(), "summary.json".into()));
        };
        let key = dataset_key(&summary, &mut seen);
        loaded.push((key, run, summary));
    }
    let tables_dir = out.join("tables");
    let plots_dir = out.join("plots");
    for d in [&tables_dir, &plots_dir] {
        std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    // a merged report carries the hashes of every input run
    let hash = loaded.iter().map(|(_, r, _)| r.config_hash.as_str()).collect::<Vec<_>>().join("+");
    let delim = format.delimiter();
    let ext = format.ext();
    let mut files = Vec::new();
    let mut emit = |name: &str, contents: String| -> Result<(), ReportError> {
        let p = if name.ends_with(".json") { plots_dir.join(name) } else { tables_dir.join(format!("{name}.{ext}")) };
        write_file(&p, &contents)?;
        files.push(p);
        Ok(())
    };

    // selection
    let mut sel = Table::new(&["dataset", "rank", "family", "hyperparameters", "mean_kappa", "sd_kappa", "rashomon_member", "selected"]);
    for (ds, run, _) in &loaded {
        match &run.selection {
            Some(s) => {
                for r in s.table().rows {
                    sel.rows.push(std::iter::once(ds.clone()).chain(r).collect());
                }
            }
            None => warnings.push(format!("{ds}: selection missing")),
        }
    }
    emit("selection", sel.render(delim, &hash, "selection"))?;

    // per-cell performance
    let mut perf = Table::new(&["dataset", "model", "size", "fold", "status", "acc", "f1", "mcc", "kappa"]);
    for (ds, run, summary) in &loaded {
        perf.rows.push(vec![
            ds.clone(),
            "baseline-lr (test)".into(),
            summary.n_train.to_string(),
            String::new(),
            "ok".into(),
            num(summary.baseline_test.acc),
            num(summary.baseline_test.f1),
            num(summary.baseline_test.mcc),
            num(summary.baseline_test.kappa),
        ]);
        let Some(cells) = &run.cells else {
            warnings.push(format!("{ds}: cells missing"));
            continue;
        };
        for c in cells {
            let status = match &c.status {
                CellStatus::Ok => "ok",
                CellStatus::RepairedShrinkage => "repaired-shrinkage",
                CellStatus::NonConverged => "non-converged",
                CellStatus::Failed { .. } => "failed",
            };
            let p = c.perf.as_ref();
            perf.rows.push(vec![
                ds.clone(),
                c.model.clone(),
                c.size.to_string(),
                c.fold.to_string(),
                status.into(),
                opt_num(p.map(|r| r.acc)),
                opt_num(p.map(|r| r.f1)),
                opt_num(p.map(|r| r.mcc)),
                opt_num(p.map(|r| r.kappa)),
            ]);
        }
    }
    emit("performance", perf.render(delim, &hash, "performance"))?;

    // correlation tables
    let with_corr: Vec<(String, &CorrelationTables)> =
        loaded.iter().filter_map(|(ds, r, _)| r.correlations.as_ref().map(|c| (ds.clone(), c))).collect();
    for (ds, run, _) in &loaded {
        if run.correlations.is_none() {
            warnings.push(format!("{ds}: correlations missing"));
        }
    }
    let intra: Vec<(String, &CorrelationTable)> = with_corr.iter().map(|(d, c)| (d.clone(), &c.intra)).collect();
    let inter: Vec<(String, &CorrelationTable)> = with_corr.iter().map(|(d, c)| (d.clone(), &c.inter)).collect();
    let bagging: Vec<(String, &CorrelationTable)> =
        with_corr.iter().filter_map(|(d, c)| c.bagging.as_ref().map(|b| (d.clone(), b))).collect();
    for (name, parts) in [("corr_intra", &intra), ("corr_inter", &inter)] {
        let (rows, method) = merge_tables(name, parts);
        emit(name, corr_table(&rows, &method).render(delim, &hash, name))?;
    }
    for (ds, c) in &with_corr {
        if c.bagging.is_none() {
            warnings.push(format!("{ds}: no bagging cells; bagging table omitted"));
        }
    }
    if !bagging.is_empty() {
        let (rows, method) = merge_tables("corr_bagging", &bagging);
        emit("corr_bagging", corr_table(&rows, &method).render(delim, &hash, "corr_bagging"))?;
    }

    // plot data
    let mut learning = BTreeMap::new();
    let mut topj = BTreeMap::new();
    let mut convergence = BTreeMap::new();
    for (ds, run, _) in &loaded {
        let Some(s) = &run.series else {
            warnings.push(format!("{ds}: series missing"));
            continue;
        };
        let mut lc = Vec::new();
        for m in &s.models {
            let rows: Vec<&PerfSummary> = s.performance.iter().filter(|p| &p.model == m).collect();
            if rows.is_empty() {
                continue;
            }
            let x: Vec<f64> = rows.iter().map(|p| p.size as f64).collect();
            for (metric, get) in [("kappa", (|r: &PerfRecord| r.kappa) as fn(&PerfRecord) -> f64), ("acc", |r| r.acc)] {
                lc.push(PlotSeries {
                    label: format!("{m} {metric}"),
                    x: x.clone(),
                    y: rows.iter().map(|p| get(&p.mean)).collect(),
                    y_sd: Some(rows.iter().map(|p| get(&p.sd)).collect()),
                });
            }
        }
        learning.insert(ds.clone(), lc);
        let mut tj = Vec::new();
        for a in &s.series.intra {
            let m = a.group.model.clone().unwrap_or_default();
            for t in &a.top_j {
                tj.push(PlotSeries { label: format!("{m} {} intra", t.metric), x: t.sizes(), y: t.values(), y_sd: None });
            }
        }
        for t in &s.series.inter.top_j {
            tj.push(PlotSeries { label: format!("{} inter-model", t.metric), x: t.sizes(), y: t.values(), y_sd: None });
        }
        topj.insert(ds.clone(), tj);
        let mut cv: Vec<PlotSeries> = s
            .series
            .convergence
            .iter()
            .map(|c| PlotSeries {
                label: c.model.clone().unwrap_or_default(),
                x: c.sizes(),
                y: c.values(),
                y_sd: None,
            })
            .collect();
        let iw = &s.series.inter.wcossim;
        if !iw.points.is_empty() {
            cv.push(PlotSeries { label: "inter-model wcossim".into(), x: iw.sizes(), y: iw.values(), y_sd: None });
        }
        convergence.insert(ds.clone(), cv);
    }
    let bundles = [
        ("learning_curves.json", "Impact of the sample size on model performance", "test score", learning),
        ("topj.json", "Impact of the sample size on top_j similarity", "mean top_j", topj),
        ("convergence.json", "Impact of the convergence of models towards the best consensus", "wcossim", convergence),
    ];
    for (file, title, y_label, panels) in bundles {
        let b = PlotBundle { title: title.into(), x_label: "sample size".into(), y_label: y_label.into(), panels };
        emit(file, Envelope::new(&hash, "plot", b).to_json())?;
    }

    for (ds, _, summary) in &loaded {
        warnings.extend(summary.warnings.iter().map(|w| format!("{ds}: {w}")));
    }
    let mut notes = String::new();
    for w in &warnings {
        let _ = writeln!(notes, "{w}");
    }
    write_file(&out.join("warnings.txt"), &notes)?;
    files.push(out.join("warnings.txt"));
    Ok(ReportOutcome { files, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_round_trip_is_byte_stable() {
        let cfg = AuditConfig::default();
        let text = Envelope::new(&cfg.hash(), "config", &cfg).to_json();
        let back: Envelope<AuditConfig> = parse_artifact(&text, "x", "config").unwrap();
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn schema_and_kind_are_checked() {
        let text = Envelope::new("h", "cells", Vec::<SweepCell>::new()).to_json();
        let old = text.replace(SCHEMA_VERSION, "rashomon-audit/0");
        assert!(matches!(parse_artifact::<Vec<SweepCell>>(&old, "x", "cells"), Err(ReportError::SchemaMismatch { .. })));
        assert!(matches!(parse_artifact::<Vec<SweepCell>>(&text, "x", "series"), Err(ReportError::WrongKind { .. })));
    }

    #[test]
    fn table_render_has_provenance_line() {
        let mut t = Table::new(&["a", "b"]);
        t.rows.push(vec!["1".into(), "x,y".into()]);
        let s = t.render(b',', "abc", "demo");
        assert_eq!(s, "# schema_version=rashomon-audit/1 config_hash=abc kind=demo\na,b\n1,\"x,y\"\n");
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1.0), "1.0");
    }

    #[test]
    fn missing_run_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_run(dir.path()), Err(ReportError::MissingRun(..))));
    }
}
