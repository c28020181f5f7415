//! The (model × sample size × fold) sweep and the agreement series built
//! from it.
//!
//! Work is grouped by (size, fold): every selected model is trained on the
//! same fold-training rows, explained against the same background and the
//! same test rows, and the bagging cell reuses those members. All random
//! streams are derived from the master seed and cell coordinates, so a
//! group computed alone matches the same group inside a full run.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Pairing, TopJMode};
use crate::data::{subsample, DataError, Dataset, FoldPlan, SampleGrid, SplitPlan, SubsampleMode};
use crate::metrics::{self, PerfRecord};
use crate::rng;
use crate::stats::{adjust, correlate, CorrelationResult, PValueMethod};
use crate::shap::{self, aggregate, make_background, Attribution, GlobalImportance, ShapConfig};
use crate::similarity::{
    self, top_j_pairwise, top_j_per_instance, wcossim, wcossim_group, wcossim_to_others, weight_vectors,
    ConsensusVector, MasMode,
};
use crate::zoo::{self, bag, Classifier, Diagnostic, ModelSpec, TrainedModel};

pub const BAGGING: &str = "bagging";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("no cells for model `{model}`")]
    MissingCells { model: String },
    #[error("consensus needs successful cells of every selected model at size {size}")]
    MissingConsensus { size: usize },
    #[error("unknown model `{0}` for this sweep")]
    UnknownModel(String),
    #[error("size {0} is not in the grid")]
    UnknownSize(usize),
    #[error("fold {fold} out of range for k = {k}")]
    UnknownFold { fold: usize, k: usize },
    #[error(transparent)]
    Similarity(#[from] similarity::SimilarityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    RepairedShrinkage,
    NonConverged,
    Failed { reason: String },
}

impl CellStatus {
    pub fn usable(&self) -> bool {
        !matches!(self, CellStatus::Failed { .. })
    }

    fn from_diagnostics(diags: &[Diagnostic]) -> Self {
        if diags.iter().any(|d| matches!(d, Diagnostic::NonConvergence { .. })) {
            CellStatus::NonConverged
        } else if diags.iter().any(|d| matches!(d, Diagnostic::RepairedShrinkage { .. })) {
            CellStatus::RepairedShrinkage
        } else {
            CellStatus::Ok
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub model: String,
    pub size: usize,
    pub fold: usize,
    pub seed: u64,
    pub train_rows: usize,
    #[serde(flatten)]
    pub status: CellStatus,
    pub perf: Option<PerfRecord>,
    pub importance: Option<GlobalImportance>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutput {
    pub cell: SweepCell,
    pub attribution: Option<Attribution>,
}

/// Parameters of the sweep that do not come from selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub seed: u64,
    pub folds: usize,
    pub subsample: SubsampleMode,
    pub shap: ShapConfig,
    pub explain_rows: Option<usize>,
    pub bagging: bool,
}

/// Everything a sweep needs besides its configuration.
pub struct SweepInputs<'a> {
    pub data: &'a Dataset,
    pub split: &'a SplitPlan,
    pub models: &'a [ModelSpec],
    pub grid: &'a SampleGrid,
}

impl SweepInputs<'_> {
    pub fn model_ids(&self, bagging: bool) -> Vec<String> {
        let mut ids: Vec<String> = self.models.iter().map(|m| m.family.name().to_string()).collect();
        if bagging {
            ids.push(BAGGING.to_string());
        }
        ids
    }
}

pub fn cell_seed(master: u64, model: &str, size: usize, fold: usize) -> u64 {
    crate::seed!(master, model, size, fold)
}

/// Test rows that get explained: all of them, or a seeded subset.
pub fn explain_indices(test: &[usize], limit: Option<usize>, master: u64) -> Vec<usize> {
    match limit {
        Some(n) if n < test.len() => {
            let mut pos = rand::seq::index::sample(&mut rng::seeded(crate::seed!(master, "explain")), test.len(), n).into_vec();
            pos.sort_unstable();
            pos.into_iter().map(|p| test[p]).collect()
        }
        _ => test.to_vec(),
    }
}

struct Shared {
    x_test: Array2<f64>,
    y_test: Vec<u8>,
    x_explain: Array2<f64>,
}

fn shared(inputs: &SweepInputs<'_>, cfg: &SweepConfig) -> Shared {
    let d = inputs.data;
    let test = &inputs.split.test_indices;
    let explain = explain_indices(test, cfg.explain_rows, cfg.seed);
    Shared { x_test: d.rows(test), y_test: d.labels_at(test), x_explain: d.rows(&explain) }
}

fn failed(model: &str, size: usize, fold: usize, seed: u64, train_rows: usize, reason: String) -> CellOutput {
    CellOutput {
        cell: SweepCell {
            model: model.to_string(),
            size,
            fold,
            seed,
            train_rows,
            status: CellStatus::Failed { reason },
            perf: None,
            importance: None,
            diagnostics: vec![],
        },
        attribution: None,
    }
}

/// Trains, scores and explains one model in a (size, fold) group.
#[allow(clippy::too_many_arguments)]
fn member_cell(
    spec: &ModelSpec,
    x: &Array2<f64>,
    y: &[u8],
    sh: &Shared,
    bg: &shap::Background,
    shap_cfg: &ShapConfig,
    master: u64,
    size: usize,
    fold: usize,
) -> (CellOutput, Option<TrainedModel>) {
    let id = spec.family.name();
    let seed = cell_seed(master, id, size, fold);
    let spec = ModelSpec { seed, ..spec.clone() };
    let model = match zoo::train(&spec, x.view(), y) {
        Ok(m) => m,
        Err(e) => return (failed(id, size, fold, seed, y.len(), e.to_string()), None),
    };
    let p = model.positive_unchecked(sh.x_test.view());
    let perf = metrics::score_probabilities(&sh.y_test, &p).ok();
    let attribution = match shap::explain(&model, sh.x_explain.view(), bg, shap_cfg) {
        Ok(a) => a,
        Err(e) => return (failed(id, size, fold, seed, y.len(), format!("explanation failed: {e}")), None),
    };
    let importance = aggregate(&attribution).tagged(id, size, fold);
    let cell = SweepCell {
        model: id.to_string(),
        size,
        fold,
        seed,
        train_rows: y.len(),
        status: CellStatus::from_diagnostics(&model.diagnostics),
        perf,
        importance: Some(importance),
        diagnostics: model.diagnostics.clone(),
    };
    (CellOutput { cell, attribution: Some(attribution) }, Some(model))
}

/// Mean of member attributions. Shapley values are linear in the model and
/// every member shares the background, explained rows and coalition
/// stream, so this equals explaining the mean-probability ensemble.
fn mean_attribution(parts: &[&Attribution]) -> Attribution {
    let m = parts.len() as f64;
    let mut values = Array2::zeros(parts[0].values.raw_dim());
    let mut outputs = vec![0.0; parts[0].outputs.len()];
    let mut base = 0.0;
    for a in parts {
        values += &a.values;
        for (o, v) in outputs.iter_mut().zip(&a.outputs) {
            *o += v;
        }
        base += a.base;
    }
    values /= m;
    Attribution {
        values,
        base: base / m,
        outputs: outputs.into_iter().map(|o| o / m).collect(),
        explained_output: parts[0].explained_output.clone(),
        mode: parts[0].mode,
    }
}

/// All cells of one (size, fold) group, optionally restricted to one model.
fn run_group(
    inputs: &SweepInputs<'_>,
    cfg: &SweepConfig,
    sh: &Shared,
    size: usize,
    fold: usize,
    only: Option<&str>,
) -> Vec<CellOutput> {
    let d = inputs.data;
    let ids = inputs.model_ids(cfg.bagging);
    let wanted: Vec<&String> = ids.iter().filter(|id| only.is_none_or(|o| o == id.as_str())).collect();
    let fail_all = |reason: String| -> Vec<CellOutput> {
        wanted.iter().map(|id| failed(id, size, fold, cell_seed(cfg.seed, id, size, fold), 0, reason.clone())).collect()
    };
    let sub = match subsample(d, &inputs.split.train_indices, size, cfg.seed, cfg.subsample) {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string()),
    };
    let plan = match FoldPlan::stratified(&d.labels_at(&sub), cfg.folds, crate::seed!(cfg.seed, "folds", size)) {
        Ok(p) => p,
        Err(e) => return fail_all(e.to_string()),
    };
    let rows: Vec<usize> = plan.train_indices(fold).into_iter().map(|p| sub[p]).collect();
    let x = d.rows(&rows);
    let y = d.labels_at(&rows);
    let bg_seed = crate::seed!(cfg.seed, "background", size, fold);
    let bg = match make_background(x.view(), cfg.shap.background, bg_seed, cfg.shap.mean_background) {
        Ok(b) => b,
        Err(e) => return fail_all(e.to_string()),
    };
    let shap_cfg = ShapConfig { seed: crate::seed!(cfg.seed, "shap", size, fold), ..cfg.shap.clone() };

    let need_bagging = cfg.bagging && only.is_none_or(|o| o == BAGGING);
    let mut members = Vec::new();
    let mut out = Vec::new();
    for spec in inputs.models {
        let id = spec.family.name();
        let keep = only.is_none_or(|o| o == id);
        if !keep && !need_bagging {
            continue;
        }
        let (cell, model) = member_cell(spec, &x, &y, sh, &bg, &shap_cfg, cfg.seed, size, fold);
        members.push((cell.clone(), model));
        if keep {
            out.push(cell);
        }
    }
    if need_bagging {
        let seed = cell_seed(cfg.seed, BAGGING, size, fold);
        if let Some((bad, _)) = members.iter().find(|(c, _)| !c.cell.status.usable()) {
            out.push(failed(BAGGING, size, fold, seed, y.len(), format!("member {} failed", bad.cell.model)));
        } else {
            let trained: Vec<TrainedModel> = members.iter().filter_map(|(_, m)| m.clone()).collect();
            let diagnostics: Vec<Diagnostic> = trained.iter().flat_map(|m| m.diagnostics.clone()).collect();
            match bag(trained) {
                Ok(ensemble) => {
                    let p = ensemble.positive_unchecked(sh.x_test.view());
                    let parts: Vec<&Attribution> = members.iter().filter_map(|(c, _)| c.attribution.as_ref()).collect();
                    let attribution = mean_attribution(&parts);
                    let importance = aggregate(&attribution).tagged(BAGGING, size, fold);
                    out.push(CellOutput {
                        cell: SweepCell {
                            model: BAGGING.to_string(),
                            size,
                            fold,
                            seed,
                            train_rows: y.len(),
                            status: CellStatus::from_diagnostics(&diagnostics),
                            perf: metrics::score_probabilities(&sh.y_test, &p).ok(),
                            importance: Some(importance),
                            diagnostics,
                        },
                        attribution: Some(attribution),
                    });
                }
                Err(e) => out.push(failed(BAGGING, size, fold, seed, y.len(), e.to_string())),
            }
        }
    }
    out
}

/// Every cell of the sweep, ordered by (size, fold, model).
pub fn run_sweep(inputs: &SweepInputs<'_>, cfg: &SweepConfig) -> Vec<CellOutput> {
    let sh = shared(inputs, cfg);
    let groups: Vec<(usize, usize)> =
        inputs.grid.sizes.iter().flat_map(|&s| (0..cfg.folds).map(move |f| (s, f))).collect();
    let per_group: Vec<Vec<CellOutput>> = groups
        .par_iter()
        .map(|&(s, f)| {
            let cells = run_group(inputs, cfg, &sh, s, f, None);
            log::debug!("group s={s} fold={f} done");
            cells
        })
        .collect();
    per_group.into_iter().flatten().collect()
}

/// Recomputes a single cell exactly as the full sweep would.
pub fn run_single_cell(
    inputs: &SweepInputs<'_>,
    cfg: &SweepConfig,
    model: &str,
    size: usize,
    fold: usize,
) -> Result<CellOutput, PipelineError> {
    if !inputs.model_ids(cfg.bagging).iter().any(|m| m == model) {
        return Err(PipelineError::UnknownModel(model.to_string()));
    }
    if !inputs.grid.sizes.contains(&size) {
        return Err(PipelineError::UnknownSize(size));
    }
    if fold >= cfg.folds {
        return Err(PipelineError::UnknownFold { fold, k: cfg.folds });
    }
    let sh = shared(inputs, cfg);
    Ok(run_group(inputs, cfg, &sh, size, fold, Some(model)).pop().expect("one cell"))
}

// ---------------------------------------------------------------------------
// Agreement series

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    Intra,
    Inter,
    Convergence,
    BaggingConvergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub size: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fold: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSeries {
    pub kind: SeriesKind,
    /// `wcossim`, `wcossim-per-fold`, or `top{j}`.
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model: Option<String>,
    pub points: Vec<SeriesPoint>,
}

impl AgreementSeries {
    pub fn sizes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.size as f64).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn at(&self, size: usize) -> Vec<f64> {
        self.points.iter().filter(|p| p.size == size).map(|p| p.value).collect()
    }
}

/// Successful importance vectors of `model`, keyed by size then fold.
fn by_size<'a>(cells: &'a [SweepCell], model: &str) -> BTreeMap<usize, Vec<&'a SweepCell>> {
    let mut out: BTreeMap<usize, Vec<&SweepCell>> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.model == model && c.status.usable() && c.importance.is_some()) {
        out.entry(c.size).or_default().push(c);
    }
    for v in out.values_mut() {
        v.sort_by_key(|c| c.fold);
    }
    out
}

fn vectors(cells: &[&SweepCell]) -> Vec<Vec<f64>> {
    cells.iter().map(|c| c.importance.as_ref().expect("filtered").per_feature.clone()).collect()
}

fn fold_average(cells: &[&SweepCell]) -> Vec<f64> {
    let v = vectors(cells);
    let k = v[0].len();
    (0..k).map(|j| v.iter().map(|r| r[j]).sum::<f64>() / v.len() as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraAgreement {
    /// Per size: wcossim over all fold pairs.
    pub group: AgreementSeries,
    /// Per (size, fold): mean wcossim of that fold against the others.
    pub per_fold: AgreementSeries,
    /// Per size: mean pairwise top-j overlap across folds.
    pub top_j: Vec<AgreementSeries>,
}

/// Agreement of one model with itself across folds.
pub fn intra_agreement(
    cells: &[SweepCell],
    model: &str,
    mas: MasMode,
    top_j: &[usize],
) -> Result<IntraAgreement, PipelineError> {
    let groups = by_size(cells, model);
    if groups.is_empty() {
        return Err(PipelineError::MissingCells { model: model.to_string() });
    }
    let mk = |metric: String| AgreementSeries {
        kind: SeriesKind::Intra,
        metric,
        model: Some(model.to_string()),
        points: vec![],
    };
    let mut group = mk("wcossim".into());
    let mut per_fold = mk("wcossim-per-fold".into());
    let k = groups.values().next().and_then(|v| v.first()).map_or(0, |c| c.importance.as_ref().unwrap().len());
    let js: Vec<usize> = top_j.iter().copied().filter(|&j| j <= k).collect();
    let mut tj: Vec<AgreementSeries> = js.iter().map(|j| mk(format!("top{j}"))).collect();
    for (&size, cs) in &groups {
        if cs.len() < 2 {
            continue;
        }
        let v = vectors(cs);
        group.points.push(SeriesPoint { size, fold: None, value: wcossim_group(&v, mas)? });
        for (i, c) in cs.iter().enumerate() {
            per_fold.points.push(SeriesPoint { size, fold: Some(c.fold), value: wcossim_to_others(&v, i, mas)? });
        }
        for (series, &j) in tj.iter_mut().zip(&js) {
            series.points.push(SeriesPoint { size, fold: None, value: top_j_pairwise(&v, j)? });
        }
    }
    Ok(IntraAgreement { group, per_fold, top_j: tj })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterAgreement {
    pub wcossim: AgreementSeries,
    pub top_j: Vec<AgreementSeries>,
}

/// Agreement across the given models at each size.
pub fn inter_agreement(
    cells: &[SweepCell],
    models: &[String],
    sizes: &[usize],
    mas: MasMode,
    pairing: Pairing,
    top_j: &[usize],
) -> Result<InterAgreement, PipelineError> {
    let per_model: Vec<BTreeMap<usize, Vec<&SweepCell>>> = models.iter().map(|m| by_size(cells, m)).collect();
    let mk = |metric: String| AgreementSeries { kind: SeriesKind::Inter, metric, model: None, points: vec![] };
    let mut ws = mk("wcossim".into());
    let k = cells.iter().find_map(|c| c.importance.as_ref()).map_or(0, |g| g.len());
    let js: Vec<usize> = top_j.iter().copied().filter(|&j| j <= k).collect();
    let mut tj: Vec<AgreementSeries> = js.iter().map(|j| mk(format!("top{j}"))).collect();
    for &size in sizes {
        let present: Vec<&Vec<&SweepCell>> = per_model.iter().filter_map(|m| m.get(&size)).collect();
        if present.len() < 2 {
            continue;
        }
        let averaged: Vec<Vec<f64>> = present.iter().map(|cs| fold_average(cs)).collect();
        match pairing {
            Pairing::FoldAverage => {
                ws.points.push(SeriesPoint { size, fold: None, value: wcossim_group(&averaged, mas)? });
            }
            Pairing::PerFold => {
                let folds: std::collections::BTreeSet<usize> =
                    present.iter().flat_map(|cs| cs.iter().map(|c| c.fold)).collect();
                for f in folds {
                    let v: Vec<Vec<f64>> = present
                        .iter()
                        .filter_map(|cs| cs.iter().find(|c| c.fold == f))
                        .map(|c| c.importance.as_ref().unwrap().per_feature.clone())
                        .collect();
                    if v.len() >= 2 {
                        ws.points.push(SeriesPoint { size, fold: Some(f), value: wcossim_group(&v, mas)? });
                    }
                }
            }
        }
        for (series, &j) in tj.iter_mut().zip(&js) {
            series.points.push(SeriesPoint { size, fold: None, value: top_j_pairwise(&averaged, j)? });
        }
    }
    Ok(InterAgreement { wcossim: ws, top_j: tj })
}

/// Consensus of the given models' fold-averaged importance at `size`.
pub fn consensus_at(cells: &[SweepCell], models: &[String], size: usize) -> Result<ConsensusVector, PipelineError> {
    let mut parts = Vec::new();
    for m in models {
        let groups = by_size(cells, m);
        let cs = groups.get(&size).ok_or(PipelineError::MissingConsensus { size })?;
        parts.push(GlobalImportance::new(fold_average(cs)).tagged(m, size, 0));
    }
    Ok(similarity::consensus(&parts)?)
}

/// Similarity of a model's fold-averaged importance to the consensus, per size.
pub fn convergence_to_consensus(
    cells: &[SweepCell],
    model: &str,
    consensus: &ConsensusVector,
    mas: MasMode,
) -> Result<AgreementSeries, PipelineError> {
    let groups = by_size(cells, model);
    if groups.is_empty() {
        return Err(PipelineError::MissingCells { model: model.to_string() });
    }
    let kind = if model == BAGGING { SeriesKind::BaggingConvergence } else { SeriesKind::Convergence };
    let mut series = AgreementSeries { kind, metric: "wcossim".into(), model: Some(model.to_string()), points: vec![] };
    for (&size, cs) in &groups {
        let pair = [fold_average(cs), consensus.per_feature.clone()];
        let w = weight_vectors(&pair, mas)?;
        series.points.push(SeriesPoint { size, fold: None, value: wcossim(&w[0].weights, &w[1].weights)?.value });
    }
    Ok(series)
}

/// Intra-model top-j averaged over per-instance rankings, from attributions.
pub fn intra_top_j_per_instance(
    outputs: &[CellOutput],
    model: &str,
    j: usize,
) -> Result<AgreementSeries, PipelineError> {
    let mut by: BTreeMap<usize, Vec<&Attribution>> = BTreeMap::new();
    for o in outputs.iter().filter(|o| o.cell.model == model && o.cell.status.usable()) {
        if let Some(a) = &o.attribution {
            by.entry(o.cell.size).or_default().push(a);
        }
    }
    let mut series =
        AgreementSeries { kind: SeriesKind::Intra, metric: format!("top{j}"), model: Some(model.to_string()), points: vec![] };
    for (size, atts) in by {
        if atts.len() < 2 {
            continue;
        }
        let mut total = 0.0;
        let mut pairs = 0;
        for a in 0..atts.len() {
            for b in a + 1..atts.len() {
                total += top_j_per_instance(atts[a], atts[b], j)?;
                pairs += 1;
            }
        }
        series.points.push(SeriesPoint { size, fold: None, value: total / pairs as f64 });
    }
    Ok(series)
}

/// Everything derived from the cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBundle {
    pub intra: Vec<IntraAgreement>,
    pub inter: InterAgreement,
    pub consensus: Option<ConsensusVector>,
    pub convergence: Vec<AgreementSeries>,
    pub notes: Vec<String>,
}

pub struct SeriesOptions<'a> {
    pub mas: MasMode,
    pub pairing: Pairing,
    pub top_j: &'a [usize],
    pub top_j_mode: TopJMode,
}

/// Builds every agreement series. `top` are the selected model ids; the
/// bagging model, when present, is explained but kept out of the consensus.
pub fn build_series(
    outputs: &[CellOutput],
    top: &[String],
    sizes: &[usize],
    opts: &SeriesOptions<'_>,
) -> Result<SeriesBundle, PipelineError> {
    let cells: Vec<SweepCell> = outputs.iter().map(|o| o.cell.clone()).collect();
    let mut notes = Vec::new();
    let failed = cells.iter().filter(|c| !c.status.usable()).count();
    if failed > 0 {
        notes.push(format!("{failed} failed cells excluded from all series"));
    }
    let has_bagging = cells.iter().any(|c| c.model == BAGGING);
    let mut all: Vec<String> = top.to_vec();
    if has_bagging {
        all.push(BAGGING.to_string());
    }
    let mut intra = Vec::new();
    for m in &all {
        match intra_agreement(&cells, m, opts.mas, opts.top_j) {
            Ok(mut a) => {
                if opts.top_j_mode == TopJMode::PerInstance {
                    a.top_j = a
                        .top_j
                        .iter()
                        .map(|s| {
                            let j: usize = s.metric.trim_start_matches("top").parse().expect("top-j metric");
                            intra_top_j_per_instance(outputs, m, j)
                        })
                        .collect::<Result<_, _>>()?;
                }
                intra.push(a)
            }
            Err(e) => notes.push(format!("intra series for {m} unavailable: {e}")),
        }
    }
    let inter = inter_agreement(&cells, top, sizes, opts.mas, opts.pairing, opts.top_j)?;
    let largest = *sizes.last().expect("non-empty grid");
    let consensus = match consensus_at(&cells, top, largest) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("no consensus: {e}"));
            None
        }
    };
    let mut convergence = Vec::new();
    if let Some(c) = &consensus {
        for m in &all {
            match convergence_to_consensus(&cells, m, c, opts.mas) {
                Ok(s) => convergence.push(s),
                Err(e) => notes.push(format!("convergence series for {m} unavailable: {e}")),
            }
        }
    }
    Ok(SeriesBundle { intra, inter, consensus, convergence, notes })
}

/// Mean and standard deviation of a performance metric per (model, size).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfSummary {
    pub model: String,
    pub size: usize,
    pub folds: usize,
    pub mean: PerfRecord,
    pub sd: PerfRecord,
}

pub fn performance_summary(cells: &[SweepCell], models: &[String], sizes: &[usize]) -> Vec<PerfSummary> {
    let mut out = Vec::new();
    for m in models {
        for &s in sizes {
            let recs: Vec<PerfRecord> =
                cells.iter().filter(|c| &c.model == m && c.size == s && c.status.usable()).filter_map(|c| c.perf).collect();
            if recs.is_empty() {
                continue;
            }
            let stat = |f: fn(&PerfRecord) -> f64| {
                let v: Vec<f64> = recs.iter().map(f).collect();
                zoo::search::mean_sd(&v)
            };
            let (acc, acc_sd) = stat(|r| r.acc);
            let (f1, f1_sd) = stat(|r| r.f1);
            let (mcc, mcc_sd) = stat(|r| r.mcc);
            let (kappa, kappa_sd) = stat(|r| r.kappa);
            out.push(PerfSummary {
                model: m.clone(),
                size: s,
                folds: recs.len(),
                mean: PerfRecord { acc, f1, mcc, kappa },
                sd: PerfRecord { acc: acc_sd, f1: f1_sd, mcc: mcc_sd, kappa: kappa_sd },
            });
        }
    }
    out
}

/// Standard deviation of a series' values at one size.
pub fn spread_at(series: &AgreementSeries, size: usize) -> Option<f64> {
    let v = series.at(size);
    (v.len() >= 2).then(|| zoo::search::mean_sd(&v).1)
}

/// Stacks the rows of the given attribution for persistence.
pub fn attribution_rows(a: &Attribution) -> Vec<Vec<f64>> {
    a.values.axis_iter(Axis(0)).map(|r| r.to_vec()).collect()
}

// ---------------------------------------------------------------------------
// Correlation tables

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    /// Model id, `pooled`, or `inter-model`.
    pub label: String,
    /// Which series was correlated with sample size.
    pub series: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub result: Option<CorrelationResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub name: String,
    pub rows: Vec<CorrelationRow>,
    pub power_method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTables {
    pub intra: CorrelationTable,
    pub inter: CorrelationTable,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bagging: Option<CorrelationTable>,
}

pub const POWER_METHOD: &str = "fisher-z approximation";

fn row(label: &str, series: &str, points: &[&SeriesPoint], alpha: f64, method: PValueMethod) -> CorrelationRow {
    let x: Vec<f64> = points.iter().map(|p| p.size as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.value).collect();
    match correlate(&x, &y, alpha, method) {
        Ok(r) => CorrelationRow { label: label.into(), series: series.into(), result: Some(r), note: None },
        Err(e) => CorrelationRow { label: label.into(), series: series.into(), result: None, note: Some(e.to_string()) },
    }
}

/// Applies BH across every row of the table that has a result.
pub fn finish_table(name: &str, mut rows: Vec<CorrelationRow>) -> CorrelationTable {
    let mut present: Vec<&mut CorrelationResult> = rows.iter_mut().filter_map(|r| r.result.as_mut()).collect();
    if !present.is_empty() {
        adjust(&mut present);
    }
    CorrelationTable { name: name.into(), rows, power_method: POWER_METHOD.into() }
}

/// Spearman(size, agreement) tables: intra-model (one point per size and
/// fold), convergence plus inter-model (one point per size), and the
/// bagging model's own rows. BH is applied within each table.
pub fn correlation_tables(
    bundle: &SeriesBundle,
    top: &[String],
    alpha: f64,
    method: PValueMethod,
) -> CorrelationTables {
    let intra_of = |m: &str| bundle.intra.iter().find(|a| a.per_fold.model.as_deref() == Some(m));
    let conv_of = |m: &str| bundle.convergence.iter().find(|s| s.model.as_deref() == Some(m));

    let mut intra_rows = Vec::new();
    let mut pooled = Vec::new();
    for m in top {
        match intra_of(m) {
            Some(a) => {
                let pts: Vec<&SeriesPoint> = a.per_fold.points.iter().collect();
                pooled.extend(pts.iter().copied());
                intra_rows.push(row(m, "intra wcossim per fold", &pts, alpha, method));
            }
            None => intra_rows.push(CorrelationRow {
                label: m.clone(),
                series: "intra wcossim per fold".into(),
                result: None,
                note: Some("no intra series".into()),
            }),
        }
    }
    intra_rows.push(row("pooled", "intra wcossim per fold", &pooled, alpha, method));

    let mut inter_rows = Vec::new();
    let mut pooled = Vec::new();
    for m in top {
        if let Some(s) = conv_of(m) {
            let pts: Vec<&SeriesPoint> = s.points.iter().collect();
            pooled.extend(pts.iter().copied());
            inter_rows.push(row(m, "similarity to consensus", &pts, alpha, method));
        }
    }
    if !pooled.is_empty() {
        inter_rows.push(row("pooled", "similarity to consensus", &pooled, alpha, method));
    }
    let pts: Vec<&SeriesPoint> = bundle.inter.wcossim.points.iter().collect();
    inter_rows.push(row("inter-model", "inter-model wcossim", &pts, alpha, method));

    let bagging = intra_of(BAGGING).map(|a| {
        let pts: Vec<&SeriesPoint> = a.per_fold.points.iter().collect();
        let mut rows = vec![row(BAGGING, "intra wcossim per fold", &pts, alpha, method)];
        if let Some(s) = conv_of(BAGGING) {
            let pts: Vec<&SeriesPoint> = s.points.iter().collect();
            rows.push(row(BAGGING, "similarity to consensus", &pts, alpha, method));
        }
        finish_table("bagging", rows)
    });

    CorrelationTables {
        intra: finish_table("intra", intra_rows),
        inter: finish_table("inter", inter_rows),
        bagging,
    }
}
