//! Tabular classification data: loading, projection, splitting and
//! coalition materialization.
//!
//! A [`Dataset`] is the player set of the valuation game. Every row carries
//! a stable id (its row index in the file it was loaded from) that survives
//! subsetting and splitting, so values computed on a training split can be
//! traced back to the original tuples.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const IRIS_CSV: &str = include_str!("../data/iris.csv");

/// Default name of the label column in CSV input.
pub const DEFAULT_LABEL_COLUMN: &str = "label";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing header row")]
    MissingHeader,
    #[error("duplicate header column `{0}`")]
    DuplicateHeader(String),
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("no feature columns besides the label column")]
    NoFeatures,
    #[error("non-numeric feature `{value}` in column `{column}` at data row {row}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("data row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("file has a header but no data rows")]
    EmptyBody,
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("expected the 150x4 three-class iris table, got {rows}x{dim} with {classes} classes")]
    NotIris {
        rows: usize,
        dim: usize,
        classes: usize,
    },
    #[error("test_count {test_count} exceeds dataset size {n}")]
    TestCountTooLarge { test_count: usize, n: usize },
    #[error("row index {index} out of range for {n} rows")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("row indices must be strictly increasing ({prev} then {next})")]
    NotIncreasing { prev: usize, next: usize },
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// Feature matrix, dense class labels and stable tuple ids.
///
/// Immutable after construction. Features are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    ids: Vec<usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with ids `0..n` and generated column/class names.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ids = (0..rows.len()).collect();
        let dim = rows.first().map_or(0, Vec::len);
        Self::from_rows(
            rows,
            labels,
            ids,
            (0..dim).map(|j| format!("x{}", j + 1)).collect(),
            (0..num_classes).map(|c| c.to_string()).collect(),
        )
    }

    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        ids: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let dim = feature_names.len();
        let mut features = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(DatasetError::Invalid(format!(
                    "row {i} has {} features, expected {dim}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(features, dim, labels, ids, feature_names, class_names)
    }

    fn from_flat(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        ids: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = labels.len();
        if ids.len() != n || features.len() != n * dim {
            return Err(DatasetError::Invalid(format!(
                "{} labels, {} ids, {} feature cells for dimension {dim}",
                n,
                ids.len(),
                features.len()
            )));
        }
        if feature_names.len() != dim {
            return Err(DatasetError::Invalid("feature name count != dimension".into()));
        }
        if class_names.is_empty() {
            return Err(DatasetError::Invalid("at least one class is required".into()));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(DatasetError::Invalid(format!("non-finite feature value {bad}")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(DatasetError::Invalid(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(DatasetError::Invalid(format!("duplicate tuple id {dup}")));
        }
        Ok(Self {
            features,
            dim,
            labels,
            ids,
            feature_names,
            class_names,
        })
    }

    /// The bundled 150-row Iris table (4 features, 3 species).
    pub fn iris() -> Self {
        read_csv(IRIS_CSV.as_bytes(), DEFAULT_LABEL_COLUMN).expect("bundled iris.csv is well formed")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Position of the row carrying `id`, if any.
    pub fn position_of(&self, id: usize) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }
}

/// Test-set size and generator seed for [`train_test_split`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_count: usize,
    pub seed: u64,
}

/// Loads a CSV file with a header row. All columns except `label_column`
/// are parsed as features; labels are encoded densely in order of first
/// appearance. Row ids are 0-based data row indices.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, label_column)
}

pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(DatasetError::MissingHeader);
    }
    let mut seen = HashSet::new();
    for h in headers.iter() {
        if !seen.insert(h) {
            return Err(DatasetError::DuplicateHeader(h.to_string()));
        }
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::MissingLabelColumn(label_column.to_string()))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(DatasetError::NoFeatures);
    }
    let feature_names: Vec<String> = feature_cols.iter().map(|&j| headers[j].to_string()).collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(DatasetError::RaggedRow {
                row,
                found: record.len(),
                expected: headers.len(),
            });
        }
        for &j in &feature_cols {
            let cell = &record[j];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => features.push(v),
                _ => {
                    return Err(DatasetError::NonNumeric {
                        row,
                        column: headers[j].to_string(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        let name = &record[label_idx];
        let label = match class_names.iter().position(|c| c == name) {
            Some(c) => c,
            None => {
                class_names.push(name.to_string());
                class_names.len() - 1
            }
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DatasetError::EmptyBody);
    }
    let ids = (0..labels.len()).collect();
    Dataset::from_flat(
        features,
        feature_cols.len(),
        labels,
        ids,
        feature_names,
        class_names,
    )
}

/// Writes `ds` in the format [`read_csv`] accepts: feature columns followed
/// by the label column holding class names.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W, label_column: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    wtr.write_record(&header)?;
    for i in 0..ds.len() {
        let mut record: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        record.push(ds.class_names[ds.labels[i]].clone());
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|source| DatasetError::Io {
        path: PathBuf::from("<writer>"),
        source,
    })?;
    Ok(())
}

/// Keeps the first two species and the first two feature columns (sepal
/// length and width) of the 150-row Iris table.
pub fn filter_iris_2d(ds: &Dataset) -> Result<Dataset> {
    if ds.len() != 150 || ds.dim() != 4 || ds.num_classes() != 3 {
        return Err(DatasetError::NotIris {
            rows: ds.len(),
            dim: ds.dim(),
            classes: ds.num_classes(),
        });
    }
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] < 2).collect();
    let mut features = Vec::with_capacity(keep.len() * 2);
    for &i in &keep {
        features.extend_from_slice(&ds.row(i)[..2]);
    }
    Dataset::from_flat(
        features,
        2,
        keep.iter().map(|&i| ds.labels[i]).collect(),
        keep.iter().map(|&i| ds.ids[i]).collect(),
        ds.feature_names[..2].to_vec(),
        ds.class_names[..2].to_vec(),
    )
}

/// Picks `cfg.test_count` rows uniformly without replacement using a
/// generator seeded from `cfg.seed`. Both halves keep the input row order.
pub fn train_test_split(ds: &Dataset, cfg: SplitConfig) -> Result<(Dataset, Dataset)> {
    let n = ds.len();
    if cfg.test_count > n {
        return Err(DatasetError::TestCountTooLarge {
            test_count: cfg.test_count,
            n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut test_idx = rand::seq::index::sample(&mut rng, n, cfg.test_count).into_vec();
    test_idx.sort_unstable();
    let mut in_test = vec![false; n];
    for &i in &test_idx {
        in_test[i] = true;
    }
    let train_idx: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    Ok((subset(ds, &train_idx)?, subset(ds, &test_idx)?))
}

/// Materializes the rows at `indices` (strictly increasing positions).
pub fn subset(ds: &Dataset, indices: &[usize]) -> Result<Dataset> {
    let n = ds.len();
    for w in indices.windows(2) {
        if w[1] <= w[0] {
            return Err(DatasetError::NotIncreasing {
                prev: w[0],
                next: w[1],
            });
        }
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(DatasetError::IndexOutOfRange { index: bad, n });
    }
    let mut features = Vec::with_capacity(indices.len() * ds.dim);
    for &i in indices {
        features.extend_from_slice(ds.row(i));
    }
    Ok(Dataset {
        features,
        dim: ds.dim,
        labels: indices.iter().map(|&i| ds.labels[i]).collect(),
        ids: indices.iter().map(|&i| ds.ids[i]).collect(),
        feature_names: ds.feature_names.clone(),
        class_names: ds.class_names.clone(),
    })
}

/// Z-scores both sets with the per-column mean and population standard
/// deviation of `train`. Constant columns are only centered.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    if train.dim != test.dim {
        return Err(DatasetError::Invalid("train/test dimension mismatch".into()));
    }
    let d = train.dim;
    let n = train.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for row in train.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; d];
    for row in train.rows() {
        for j in 0..d {
            scale[j] += (row[j] - mean[j]).powi(2) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let apply = |ds: &Dataset| {
        let mut out = ds.clone();
        for (k, v) in out.features.iter_mut().enumerate() {
            let j = k % d;
            *v = (*v - mean[j]) / scale[j];
        }
        out
    };
    Ok((apply(train), apply(test)))
}
