//! Retraining experiments on value-ranked selections.
//!
//! Tuples are ranked by their estimated value; a fresh model is trained on
//! the `k` highest or `k` lowest and scored on the held-out split. The
//! values that drive a model kind's selection are always computed with a
//! utility of that same kind.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{subset, train_test_split, Dataset, DatasetError, SplitConfig};
use crate::model::{accuracy, support_vectors, train, ModelError, ModelKind, ModelSpec, ModelUtility};
use crate::shapley::{monte_carlo_shapley, AggregationMode, McConfig, ShapleyError};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("k={k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("{values} values for {ids} ids")]
    LengthMismatch { values: usize, ids: usize },
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("model kind {0} listed twice")]
    DuplicateModel(ModelKind),
    #[error("at least one model spec is required")]
    NoModels,
    #[error("at least one split seed is required")]
    NoSplits,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Shapley(#[from] ShapleyError),
}

pub type Result<T, E = EvaluationError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SelectionDirection {
    #[serde(rename = "highest")]
    Highest,
    #[serde(rename = "lowest")]
    Lowest,
}

impl SelectionDirection {
    pub const ALL: [SelectionDirection; 2] = [Self::Highest, Self::Lowest];
}

impl fmt::Display for SelectionDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Highest => "highest",
            Self::Lowest => "lowest",
        })
    }
}

/// Ids of the `k` largest (or smallest) values; ties go to the smaller id.
pub fn rank_topk(values: &[f64], ids: &[usize], k: usize, direction: SelectionDirection) -> Result<Vec<usize>> {
    if values.len() != ids.len() {
        return Err(EvaluationError::LengthMismatch {
            values: values.len(),
            ids: ids.len(),
        });
    }
    if k == 0 || k > values.len() {
        return Err(EvaluationError::KOutOfRange { k, n: values.len() });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(EvaluationError::NonFinite(i));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let by_value = values[a].total_cmp(&values[b]);
        let by_value = match direction {
            SelectionDirection::Highest => by_value.reverse(),
            SelectionDirection::Lowest => by_value,
        };
        by_value.then(ids[a].cmp(&ids[b]))
    });
    Ok(order[..k].iter().map(|&i| ids[i]).collect())
}

/// Test accuracy of `spec` trained on the `k` selected rows of `train_set`.
/// `values[i]` belongs to row `i`.
pub fn retrain_with_selection(
    train_set: &Dataset,
    test: &Dataset,
    values: &[f64],
    k: usize,
    direction: SelectionDirection,
    spec: &ModelSpec,
) -> Result<f64> {
    let positions: Vec<usize> = (0..train_set.len()).collect();
    let picked = rank_topk(values, &positions, k, direction)?;
    let mut rows = picked;
    rows.sort_unstable();
    let data = subset(train_set, &rows)?;
    Ok(accuracy(&train(spec, &data)?, test)?)
}

pub fn support_vector_overlap(
    values: &[f64],
    ids: &[usize],
    k: usize,
    direction: SelectionDirection,
    sv_ids: &BTreeSet<usize>,
) -> Result<usize> {
    Ok(rank_topk(values, ids, k, direction)?
        .iter()
        .filter(|id| sv_ids.contains(id))
        .count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    /// Selection size for retraining.
    pub k: usize,
    /// Selection size for the support-vector overlap counts.
    pub overlap_k: usize,
    pub sv_tolerance: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            k: 35,
            overlap_k: 10,
            sv_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub mode: AggregationMode,
    pub model: ModelKind,
    pub direction: SelectionDirection,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapCell {
    pub mode: AggregationMode,
    pub direction: SelectionDirection,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model: ModelSpec,
    pub permutations_used: usize,
}

/// Accuracy grid (mode × model × direction) for one train/test split, plus
/// support-vector overlap counts when a linear SVM is among the models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub k: usize,
    pub overlap_k: usize,
    pub seed: u64,
    pub max_permutations: usize,
    pub split_seed: Option<u64>,
    pub train_size: usize,
    pub test_size: usize,
    pub runs: Vec<ModelRun>,
    pub cells: Vec<AccuracyCell>,
    pub support_vectors: Option<usize>,
    pub overlap: Vec<OverlapCell>,
}

impl EvaluationReport {
    pub fn accuracy(&self, mode: AggregationMode, model: ModelKind, direction: SelectionDirection) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.mode == mode && c.model == model && c.direction == direction)
            .map(|c| c.accuracy)
    }

    pub fn overlap(&self, mode: AggregationMode, direction: SelectionDirection) -> Option<usize> {
        self.overlap
            .iter()
            .find(|c| c.mode == mode && c.direction == direction)
            .map(|c| c.count)
    }

    fn models(&self) -> Vec<ModelKind> {
        self.runs.iter().map(|r| r.model.kind).collect()
    }

    pub fn text_table(&self) -> String {
        render_table(&self.models(), self.k, |mode, model, dir| self.accuracy(mode, model, dir))
    }
}

/// Fills the full accuracy grid for one split. Each model spec gets one
/// Monte Carlo pass serving all three modes.
pub fn compare_modes(
    train_set: &Dataset,
    test: &Dataset,
    specs: &[ModelSpec],
    cfg: &EvaluationConfig,
    mc: &McConfig,
) -> Result<EvaluationReport> {
    if specs.is_empty() {
        return Err(EvaluationError::NoModels);
    }
    let mut kinds = BTreeSet::new();
    for spec in specs {
        if !kinds.insert(spec.kind) {
            return Err(EvaluationError::DuplicateModel(spec.kind));
        }
    }
    let n = train_set.len();
    if cfg.k == 0 || cfg.k > n {
        return Err(EvaluationError::KOutOfRange { k: cfg.k, n });
    }

    let mut runs = Vec::new();
    let mut cells = Vec::new();
    let mut overlap = Vec::new();
    let mut sv_count = None;
    for spec in specs {
        let utility = ModelUtility::new(*spec, train_set, test)?;
        let estimates = monte_carlo_shapley(&utility, n, &AggregationMode::ALL, mc)?;
        runs.push(ModelRun {
            model: *spec,
            permutations_used: estimates[0].permutations_used,
        });
        for est in &estimates {
            for direction in SelectionDirection::ALL {
                cells.push(AccuracyCell {
                    mode: est.mode,
                    model: spec.kind,
                    direction,
                    accuracy: retrain_with_selection(train_set, test, &est.values, cfg.k, direction, spec)?,
                });
            }
        }
        if spec.kind == ModelKind::LinearSvm {
            let full = train(spec, train_set)?;
            if !full.is_fallback() {
                let svs = support_vectors(&full, train_set, cfg.sv_tolerance)?;
                let k = cfg.overlap_k.min(n);
                for est in &estimates {
                    for direction in SelectionDirection::ALL {
                        overlap.push(OverlapCell {
                            mode: est.mode,
                            direction,
                            count: support_vector_overlap(&est.values, train_set.ids(), k, direction, &svs)?,
                        });
                    }
                }
                sv_count = Some(svs.len());
            }
        }
    }
    cells.sort_by_key(|c| (c.mode, c.model, c.direction));
    Ok(EvaluationReport {
        k: cfg.k,
        overlap_k: cfg.overlap_k,
        seed: mc.master_seed,
        max_permutations: mc.max_permutations,
        split_seed: None,
        train_size: n,
        test_size: test.len(),
        runs,
        cells,
        support_vectors: sv_count,
        overlap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanOverlap {
    pub mode: AggregationMode,
    pub direction: SelectionDirection,
    pub mean: f64,
}

/// [`compare_modes`] repeated over several random splits, with per-cell
/// means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub split_seeds: Vec<u64>,
    pub test_count: usize,
    pub reports: Vec<EvaluationReport>,
    pub mean: Vec<AccuracyCell>,
    pub mean_overlap: Vec<MeanOverlap>,
}

impl SplitEvaluation {
    pub fn mean_accuracy(&self, mode: AggregationMode, model: ModelKind, direction: SelectionDirection) -> Option<f64> {
        self.mean
            .iter()
            .find(|c| c.mode == mode && c.model == model && c.direction == direction)
            .map(|c| c.accuracy)
    }

    pub fn mean_overlap(&self, mode: AggregationMode, direction: SelectionDirection) -> Option<f64> {
        self.mean_overlap
            .iter()
            .find(|c| c.mode == mode && c.direction == direction)
            .map(|c| c.mean)
    }

    pub fn text_table(&self) -> String {
        let first = &self.reports[0];
        render_table(&first.models(), first.k, |mode, model, dir| self.mean_accuracy(mode, model, dir))
    }
}

pub fn evaluate_splits(
    ds: &Dataset,
    test_count: usize,
    split_seeds: &[u64],
    specs: &[ModelSpec],
    cfg: &EvaluationConfig,
    mc: &McConfig,
) -> Result<SplitEvaluation> {
    evaluate_splits_with(ds, test_count, split_seeds, specs, cfg, mc, |train, test| Ok((train, test)))
}

/// Variant of [`evaluate_splits`] that lets the caller transform each split
/// (e.g. standardize) before evaluation.
pub fn evaluate_splits_with<F>(
    ds: &Dataset,
    test_count: usize,
    split_seeds: &[u64],
    specs: &[ModelSpec],
    cfg: &EvaluationConfig,
    mc: &McConfig,
    prepare: F,
) -> Result<SplitEvaluation>
where
    F: Fn(Dataset, Dataset) -> Result<(Dataset, Dataset)>,
{
    if split_seeds.is_empty() {
        return Err(EvaluationError::NoSplits);
    }
    let mut reports = Vec::with_capacity(split_seeds.len());
    for &seed in split_seeds {
        let (train_set, test) = train_test_split(ds, SplitConfig { test_count, seed })?;
        let (train_set, test) = prepare(train_set, test)?;
        let mut report = compare_modes(&train_set, &test, specs, cfg, mc)?;
        report.split_seed = Some(seed);
        reports.push(report);
    }
    let count = reports.len() as f64;
    let mean = reports[0]
        .cells
        .iter()
        .map(|cell| AccuracyCell {
            accuracy: reports
                .iter()
                .filter_map(|r| r.accuracy(cell.mode, cell.model, cell.direction))
                .sum::<f64>()
                / count,
            ..cell.clone()
        })
        .collect();
    let mean_overlap = reports[0]
        .overlap
        .iter()
        .map(|cell| MeanOverlap {
            mode: cell.mode,
            direction: cell.direction,
            mean: reports
                .iter()
                .filter_map(|r| r.overlap(cell.mode, cell.direction))
                .sum::<usize>() as f64
                / count,
        })
        .collect();
    Ok(SplitEvaluation {
        split_seeds: split_seeds.to_vec(),
        test_count,
        reports,
        mean,
        mean_overlap,
    })
}

fn render_table<F>(models: &[ModelKind], k: usize, cell: F) -> String
where
    F: Fn(AggregationMode, ModelKind, SelectionDirection) -> Option<f64>,
{
    let mut headers = Vec::new();
    for model in models {
        for dir in SelectionDirection::ALL {
            headers.push(format!("{} ({dir}K)", model.short_name()));
        }
    }
    let width = headers.iter().map(String::len).max().unwrap_or(0).max(8);
    let mut out = format!("Model accuracy (K={k})\n{:<6}", "");
    for h in &headers {
        let _ = write!(out, " | {h:>width$}");
    }
    out.push('\n');
    out.push_str(&"-".repeat(6 + headers.len() * (width + 3)));
    out.push('\n');
    for mode in AggregationMode::ALL {
        let _ = write!(out, "{:<6}", mode.as_str().to_ascii_uppercase());
        for model in models {
            for dir in SelectionDirection::ALL {
                let text = cell(mode, *model, dir).map_or("-".to_string(), |a| format!("{:.2}%", a * 100.0));
                let _ = write!(out, " | {text:>width$}");
            }
        }
        out.push('\n');
    }
    out
}
