//! Tabular ingestion, stratified splitting, fold planning and the sample-size
//! grid.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("failed to read {path}: {message}")]
    Io { path: String, message: String },
    #[error("file is empty or has no data rows")]
    EmptyFile,
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("label value `{value}` on data row {row} is not binary after mapping")]
    NonBinaryLabel { row: usize, value: String },
    #[error("labels contain a single class; both 0 and 1 are required")]
    SingleClass,
    #[error("non-finite value on data row {row}, column `{column}`")]
    NonFiniteValue { row: usize, column: String },
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("no feature columns besides the label")]
    NoFeatures,
    #[error("data row {row} has {got} fields, header has {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("train and test headers differ")]
    HeaderMismatch,
    #[error("a class would be absent from the training split")]
    DegenerateClass,
    #[error("test fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("need at least k={k} instances, got {n}")]
    TooFewInstances { n: usize, k: usize },
    #[error("each class needs at least k={k} instances (smallest class has {smallest})")]
    TooFewPerClass { smallest: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
    #[error("training set of {0} rows is smaller than the minimum grid size 16")]
    TrainTooSmall(usize),
    #[error("requested subsample of {requested} rows but only {available} are available")]
    SizeTooLarge { requested: usize, available: usize },
}

/// Validated binary-classification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let d = Dataset { name: name.into(), features, labels, feature_names };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.features.nrows() < 2 || self.labels.len() != self.features.nrows() {
            return Err(DataError::EmptyFile);
        }
        if self.features.ncols() == 0 || self.feature_names.len() != self.features.ncols() {
            return Err(DataError::NoFeatures);
        }
        let mut seen = std::collections::HashSet::new();
        for n in &self.feature_names {
            if !seen.insert(n.as_str()) {
                return Err(DataError::DuplicateFeature(n.clone()));
            }
        }
        for (row, y) in self.labels.iter().enumerate() {
            if *y > 1 {
                return Err(DataError::NonBinaryLabel { row: row + 1, value: y.to_string() });
            }
        }
        if !(self.labels.contains(&0) && self.labels.contains(&1)) {
            return Err(DataError::SingleClass);
        }
        for ((row, col), v) in self.features.indexed_iter() {
            if !v.is_finite() {
                return Err(DataError::NonFiniteValue {
                    row: row + 1,
                    column: self.feature_names[col].clone(),
                });
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), indices)
    }

    pub fn labels_at(&self, indices: &[usize]) -> Vec<u8> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// SHA-256 over shape, names, values and labels.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.n_rows() as u64).to_le_bytes());
        h.update((self.n_features() as u64).to_le_bytes());
        for n in &self.feature_names {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        for v in self.features.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(&self.labels);
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub delimiter: u8,
    /// Label value mapped to class 1. Without it labels must parse as 0/1.
    pub positive_label: Option<String>,
    /// When set together with `positive_label`, the only value mapped to 0.
    pub negative_label: Option<String>,
    /// Replace missing numeric values with the column mean instead of failing.
    pub impute_mean: bool,
    /// Expand categorical columns into indicator columns instead of integer codes.
    pub one_hot: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            delimiter: b',',
            positive_label: None,
            negative_label: None,
            impute_mean: false,
            one_hot: false,
        }
    }
}

const MISSING: &[&str] = &["", "NA", "N/A", "NaN", "nan", "null", "?"];

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_raw(path: &Path, delimiter: u8) -> Result<RawTable, DataError> {
    let io_err = |e: &dyn std::fmt::Display| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| io_err(&e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| io_err(&e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(DataError::EmptyFile);
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| io_err(&e))?;
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(DataError::RaggedRow { row: i + 1, expected: header.len(), got: rec.len() });
        }
        rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Ok(RawTable { header, rows })
}

fn map_label(value: &str, row: usize, opts: &IngestOptions) -> Result<u8, DataError> {
    let bad = || DataError::NonBinaryLabel { row, value: value.to_string() };
    if let Some(pos) = &opts.positive_label {
        if value == pos {
            return Ok(1);
        }
        return match &opts.negative_label {
            Some(neg) if value == neg => Ok(0),
            Some(_) => Err(bad()),
            None => Ok(0),
        };
    }
    match value.parse::<f64>() {
        Ok(0.0) => Ok(0),
        Ok(1.0) => Ok(1),
        _ => Err(bad()),
    }
}

fn encode_table(
    raw: &RawTable,
    label_column: &str,
    opts: &IngestOptions,
    name: &str,
) -> Result<Dataset, DataError> {
    let label_idx = raw
        .header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingLabelColumn(label_column.to_string()))?;
    let labels = raw
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| map_label(&r[label_idx], i + 1, opts))
        .collect::<Result<Vec<_>, _>>()?;

    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (c, col_name) in raw.header.iter().enumerate() {
        if c == label_idx {
            continue;
        }
        let cells: Vec<&str> = raw.rows.iter().map(|r| r[c].as_str()).collect();
        let numeric = cells
            .iter()
            .all(|s| MISSING.contains(s) || s.parse::<f64>().is_ok());
        if numeric {
            let mut values: Vec<f64> = cells
                .iter()
                .map(|s| if MISSING.contains(s) { f64::NAN } else { s.parse().unwrap_or(f64::NAN) })
                .collect();
            let bad_row = values.iter().position(|v| !v.is_finite());
            if let Some(row) = bad_row {
                if !opts.impute_mean {
                    return Err(DataError::NonFiniteValue { row: row + 1, column: col_name.clone() });
                }
                let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
                if finite.is_empty() {
                    return Err(DataError::NonFiniteValue { row: row + 1, column: col_name.clone() });
                }
                let mean = finite.iter().sum::<f64>() / finite.len() as f64;
                for v in values.iter_mut().filter(|v| !v.is_finite()) {
                    *v = mean;
                }
            }
            names.push(col_name.clone());
            columns.push(values);
        } else {
            // integer codes by first appearance
            let mut codes: HashMap<&str, usize> = HashMap::new();
            let mut order: Vec<&str> = Vec::new();
            let coded: Vec<usize> = cells
                .iter()
                .map(|s| {
                    let next = codes.len();
                    *codes.entry(s).or_insert_with(|| {
                        order.push(s);
                        next
                    })
                })
                .collect();
            if opts.one_hot {
                for (code, level) in order.iter().enumerate() {
                    names.push(format!("{col_name}={level}"));
                    columns.push(coded.iter().map(|&v| if v == code { 1.0 } else { 0.0 }).collect());
                }
            } else {
                names.push(col_name.clone());
                columns.push(coded.iter().map(|&v| v as f64).collect());
            }
        }
    }
    let n = raw.rows.len();
    let k = columns.len();
    let mut features = Array2::zeros((n, k));
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            features[[i, j]] = *v;
        }
    }
    Dataset::new(name, features, labels, names)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

/// Reads a delimited file with a header row into a validated [`Dataset`].
///
/// Columns whose every cell parses as a number (or is a missing token) are
/// numeric; anything else is integer-coded by first appearance, or expanded
/// to indicator columns with `one_hot`. Row order is preserved.
pub fn load_dataset(
    path: &Path,
    label_column: &str,
    opts: &IngestOptions,
) -> Result<Dataset, DataError> {
    let raw = read_raw(path, opts.delimiter)?;
    encode_table(&raw, label_column, opts, &stem(path))
}

/// Loads an explicit train/test file pair. Categorical codes are shared
/// across both files; the returned plan keeps the given partition verbatim.
pub fn load_pair(
    train_path: &Path,
    test_path: &Path,
    label_column: &str,
    opts: &IngestOptions,
) -> Result<(Dataset, SplitPlan), DataError> {
    let mut train = read_raw(train_path, opts.delimiter)?;
    let test = read_raw(test_path, opts.delimiter)?;
    if train.header != test.header {
        return Err(DataError::HeaderMismatch);
    }
    let n_train = train.rows.len();
    let n_test = test.rows.len();
    train.rows.extend(test.rows);
    let d = encode_table(&train, label_column, opts, &stem(train_path))?;
    let plan = SplitPlan {
        train_indices: (0..n_train).collect(),
        test_indices: (n_train..n_train + n_test).collect(),
        seed: 0,
    };
    if !plan.train_indices.iter().any(|&i| d.labels[i] == 1)
        || !plan.train_indices.iter().any(|&i| d.labels[i] == 0)
    {
        return Err(DataError::DegenerateClass);
    }
    Ok((d, plan))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

fn class_members(labels: &[u8], indices: impl Iterator<Item = usize>) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for i in indices {
        out[labels[i] as usize].push(i);
    }
    out
}

/// Stratified train/test split, deterministic in `seed`.
pub fn make_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitPlan, DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::BadFraction(test_fraction));
    }
    let mut classes = class_members(&d.labels, 0..d.n_rows());
    if classes.iter().any(|c| c.len() < 2) {
        return Err(DataError::DegenerateClass);
    }
    let mut rng = rng::seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in classes.iter_mut() {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan { train_indices: train, test_indices: test, seed })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// Round-robin over per-class shuffled positions. Per-fold class counts
    /// differ from proportional by less than one; only requires `n >= k`.
    pub fn stratified(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan, DataError> {
        if k < 2 {
            return Err(DataError::BadFoldCount(k));
        }
        if labels.len() < k {
            return Err(DataError::TooFewInstances { n: labels.len(), k });
        }
        let mut classes = class_members(labels, 0..labels.len());
        let mut rng = rng::seeded(seed);
        let mut assignments = vec![0; labels.len()];
        let mut pos = 0;
        for members in classes.iter_mut() {
            members.shuffle(&mut rng);
            for &i in members.iter() {
                assignments[i] = pos % k;
                pos += 1;
            }
        }
        Ok(FoldPlan { k, assignments })
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }
}

/// Stratified k-fold plan for cross-validated scoring; every fold receives
/// both classes.
pub fn make_folds(n: usize, labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::BadFoldCount(k));
    }
    if n < k || labels.len() < k {
        return Err(DataError::TooFewInstances { n: n.min(labels.len()), k });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let smallest = pos.min(labels.len() - pos);
    if smallest < k {
        return Err(DataError::TooFewPerClass { smallest, k });
    }
    FoldPlan::stratified(labels, k, seed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub sizes: Vec<usize>,
}

pub const MIN_GRID_SIZE: usize = 16;

/// Powers of two from 16 up to the train size, with the train size appended
/// when it is not itself a power of two.
pub fn make_grid(train_size: usize) -> Result<SampleGrid, DataError> {
    if train_size < MIN_GRID_SIZE {
        return Err(DataError::TrainTooSmall(train_size));
    }
    let mut sizes = Vec::new();
    let mut s = MIN_GRID_SIZE;
    while s <= train_size {
        sizes.push(s);
        s *= 2;
    }
    if *sizes.last().unwrap() != train_size {
        sizes.push(train_size);
    }
    Ok(SampleGrid { sizes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SubsampleMode {
    /// One shuffled order per class; every size takes a prefix.
    #[default]
    Nested,
    /// A fresh shuffled order per size.
    Independent,
}

/// Stratified subsample of `s` rows from `train`, returned in the order the
/// rows appear in `train`.
pub fn subsample(
    d: &Dataset,
    train: &[usize],
    s: usize,
    seed: u64,
    mode: SubsampleMode,
) -> Result<Vec<usize>, DataError> {
    if s > train.len() {
        return Err(DataError::SizeTooLarge { requested: s, available: train.len() });
    }
    if s == train.len() {
        return Ok(train.to_vec());
    }
    // positions into `train`, per class
    let mut classes = [Vec::new(), Vec::new()];
    for (p, &i) in train.iter().enumerate() {
        classes[d.labels[i] as usize].push(p);
    }
    let n_pos_avail = classes[1].len();
    let n_neg_avail = classes[0].len();
    let share = n_pos_avail as f64 / train.len() as f64;
    let mut n_pos = (s as f64 * share).round() as usize;
    if s >= 2 && n_pos_avail > 0 && n_neg_avail > 0 {
        n_pos = n_pos.clamp(1, s - 1);
    }
    n_pos = n_pos.min(n_pos_avail).max(s.saturating_sub(n_neg_avail));
    let n_neg = s - n_pos;

    let order_seed = match mode {
        SubsampleMode::Nested => crate::seed!(seed, "subsample"),
        SubsampleMode::Independent => crate::seed!(seed, "subsample", s),
    };
    let mut rng = rng::seeded(order_seed);
    for c in classes.iter_mut() {
        c.shuffle(&mut rng);
    }
    let mut picked: Vec<usize> = classes[1][..n_pos]
        .iter()
        .chain(&classes[0][..n_neg])
        .copied()
        .collect();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|p| train[p]).collect())
}

/// Z-score transform fitted on training rows. Constant columns keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(m);
            scale.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let src = x.as_standard_layout();
        let k = self.mean.len();
        if k == 0 {
            return src.into_owned();
        }
        let inv: Vec<f64> = self.scale.iter().map(|s| 1.0 / s).collect();
        let mut data = Vec::with_capacity(src.len());
        for row in src.as_slice().expect("standard layout").chunks_exact(k) {
            data.extend(row.iter().zip(&self.mean).zip(&inv).map(|((v, m), s)| (v - m) * s));
        }
        Array2::from_shape_vec(src.raw_dim(), data).expect("same shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn balanced(n: usize) -> Dataset {
        let features = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = (0..n).map(|i| (i % 2) as u8).collect();
        Dataset::new("b", features, labels, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn minimal_two_row_file() {
        let f = write_tmp("x,y,label\n1,2,0\n3,4,1\n");
        let d = load_dataset(f.path(), "label", &IngestOptions::default()).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.labels, vec![0, 1]);
        assert_eq!(d.feature_names, vec!["x", "y"]);
    }

    #[test]
    fn label_mapping_yes_no() {
        let f = write_tmp("x,outcome\n1,yes\n2,no\n3,yes\n");
        let opts = IngestOptions { positive_label: Some("yes".into()), ..Default::default() };
        let d = load_dataset(f.path(), "outcome", &opts).unwrap();
        assert_eq!(d.labels, vec![1, 0, 1]);
    }

    #[test]
    fn ingestion_errors() {
        let opts = IngestOptions::default();
        let f = write_tmp("x,label\n1,0\n2,1\n");
        assert_eq!(
            load_dataset(f.path(), "target", &opts),
            Err(DataError::MissingLabelColumn("target".into()))
        );
        let f = write_tmp("x,label\n1,0\n2,2\n");
        assert_eq!(
            load_dataset(f.path(), "label", &opts),
            Err(DataError::NonBinaryLabel { row: 2, value: "2".into() })
        );
        let f = write_tmp("x,z,label\n1,4,0\n2,,1\n");
        assert_eq!(
            load_dataset(f.path(), "label", &opts),
            Err(DataError::NonFiniteValue { row: 2, column: "z".into() })
        );
        let f = write_tmp("x,label\n");
        assert_eq!(load_dataset(f.path(), "label", &opts), Err(DataError::EmptyFile));
        let f = write_tmp("");
        assert_eq!(load_dataset(f.path(), "label", &opts), Err(DataError::EmptyFile));
    }

    #[test]
    fn mean_imputation_under_flag() {
        let f = write_tmp("x,z,label\n1,4,0\n2,NA,1\n3,8,1\n");
        let opts = IngestOptions { impute_mean: true, ..Default::default() };
        let d = load_dataset(f.path(), "label", &opts).unwrap();
        assert_eq!(d.features[[1, 1]], 6.0);
    }

    #[test]
    fn categorical_codes_by_first_appearance() {
        let f = write_tmp("color,label\nred,0\nblue,1\nred,1\ngreen,0\n");
        let d = load_dataset(f.path(), "label", &IngestOptions::default()).unwrap();
        assert_eq!(d.features.column(0).to_vec(), vec![0.0, 1.0, 0.0, 2.0]);
        let opts = IngestOptions { one_hot: true, ..Default::default() };
        let d = load_dataset(f.path(), "label", &opts).unwrap();
        assert_eq!(d.feature_names, vec!["color=red", "color=blue", "color=green"]);
        assert_eq!(d.features.row(3).to_vec(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn explicit_pair_kept_verbatim() {
        let tr = write_tmp("x,label\n1,0\n2,1\n3,0\n");
        let te = write_tmp("x,label\n4,1\n5,0\n");
        let (d, plan) = load_pair(tr.path(), te.path(), "label", &IngestOptions::default()).unwrap();
        assert_eq!(d.n_rows(), 5);
        assert_eq!(plan.train_indices, vec![0, 1, 2]);
        assert_eq!(plan.test_indices, vec![3, 4]);
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let d = balanced(100);
        let plan = make_split(&d, 0.2, 7).unwrap();
        assert_eq!(plan.train_indices.len(), 80);
        assert_eq!(plan.test_indices.len(), 20);
        assert_eq!(plan.test_indices.iter().filter(|&&i| d.labels[i] == 1).count(), 10);
        assert_eq!(plan, make_split(&d, 0.2, 7).unwrap());
        let mut all: Vec<usize> = plan.train_indices.iter().chain(&plan.test_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_degenerate_class() {
        let features = Array2::zeros((3, 1));
        let d = Dataset::new("t", features, vec![0, 0, 1], vec!["x".into()]).unwrap();
        assert_eq!(make_split(&d, 0.5, 1), Err(DataError::DegenerateClass));
    }

    #[test]
    fn folds_exactly_stratified() {
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let plan = make_folds(20, &labels, 10, 3).unwrap();
        for f in 0..10 {
            let members = plan.test_indices(f);
            assert_eq!(members.len(), 2);
            assert_eq!(members.iter().filter(|&&i| labels[i] == 1).count(), 1);
        }
        assert_eq!(plan, make_folds(20, &labels, 10, 3).unwrap());
    }

    #[test]
    fn folds_errors() {
        let labels = vec![0u8, 1, 0, 1, 0, 1, 0, 1, 0];
        assert_eq!(make_folds(9, &labels, 10, 0), Err(DataError::TooFewInstances { n: 9, k: 10 }));
        let labels: Vec<u8> = (0..30).map(|i| u8::from(i < 5)).collect();
        assert_eq!(
            make_folds(30, &labels, 10, 0),
            Err(DataError::TooFewPerClass { smallest: 5, k: 10 })
        );
    }

    #[test]
    fn grid_rule() {
        assert_eq!(make_grid(768).unwrap().sizes, vec![16, 32, 64, 128, 256, 512, 768]);
        assert_eq!(make_grid(16).unwrap().sizes, vec![16]);
        assert_eq!(make_grid(15), Err(DataError::TrainTooSmall(15)));
    }

    #[test]
    fn grid_matches_enumeration_oracle() {
        // oracle: powers of two <= n, then n if missing
        for n in 16..3000usize {
            let mut expect: Vec<usize> = (4..32).map(|e| 1usize << e).take_while(|&p| p <= n).collect();
            if !n.is_power_of_two() {
                expect.push(n);
            }
            assert_eq!(make_grid(n).unwrap().sizes, expect, "n={n}");
        }
        assert_eq!(make_grid(100).unwrap().sizes, vec![16, 32, 64, 100]);
    }

    #[test]
    fn subsample_properties() {
        let d = balanced(200);
        let train: Vec<usize> = (0..200).step_by(2).chain((1..200).step_by(2)).collect();
        assert_eq!(subsample(&d, &train, 200, 5, SubsampleMode::Nested).unwrap(), train);
        let s16 = subsample(&d, &train, 16, 5, SubsampleMode::Nested).unwrap();
        assert_eq!(s16.iter().filter(|&&i| d.labels[i] == 1).count(), 8);
        let s32 = subsample(&d, &train, 32, 5, SubsampleMode::Nested).unwrap();
        assert!(s16.iter().all(|i| s32.contains(i)));
        assert_eq!(s16, subsample(&d, &train, 16, 5, SubsampleMode::Nested).unwrap());
        assert!(matches!(
            subsample(&d, &train, 201, 5, SubsampleMode::Nested),
            Err(DataError::SizeTooLarge { .. })
        ));
        let ind = subsample(&d, &train, 16, 5, SubsampleMode::Independent).unwrap();
        assert_eq!(ind.len(), 16);
    }

    #[test]
    fn standardizer_centers() {
        let x = ndarray::array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(x.view());
        let z = s.transform(x.view());
        assert_eq!(z, ndarray::array![[-1.0, 0.0], [1.0, 0.0]]);
    }
}
