//! Resolved run configurations and their execution.
//!
//! Every subcommand is first resolved into a [`RunConfig`] holding each
//! setting that affects its output. The same value is stored in the run
//! manifest, so `replay` reproduces the payload byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use shapval::dataset::{standardize, DatasetError};
use shapval::evaluation::{evaluate_splits_with, rank_topk};
use shapval::shapley::{exact_shapley_modes, EstimateDocument, ShapleyEstimate};
use shapval::{
    filter_iris_2d, load_csv, monte_carlo_shapley, support_vectors, train, train_test_split, AggregationMode, Dataset,
    EvaluationConfig, McConfig, ModelKind, ModelSpec, ModelUtility, SelectionDirection, SplitConfig,
};

use crate::args::{ComputeArgs, DataArgs, EvaluateArgs, ExportArgs, SamplingArgs, TrainerArgs};

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations (exit 2).
    Usage(String),
    /// Data, model or I/O failures (exit 1).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Runtime(err) => write!(f, "error: {err:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Runtime(err)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(err: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(err.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// `None` selects the bundled Iris table.
    pub path: Option<PathBuf>,
    pub label_column: String,
    pub iris_2d: bool,
    pub test_count: usize,
    pub split_seed: u64,
    pub standardize: bool,
}

impl From<&DataArgs> for DataConfig {
    fn from(a: &DataArgs) -> Self {
        Self {
            path: a.data.clone(),
            label_column: a.label_col.clone(),
            iris_2d: a.iris_2d,
            test_count: a.test_count,
            split_seed: a.split_seed,
            standardize: a.standardize,
        }
    }
}

impl DataConfig {
    fn load(&self) -> Result<Dataset, CliError> {
        let ds = match &self.path {
            Some(path) => load_csv(path, &self.label_column).map_err(runtime)?,
            None => Dataset::iris(),
        };
        if self.iris_2d {
            filter_iris_2d(&ds).map_err(runtime)
        } else {
            Ok(ds)
        }
    }

    fn split_with(&self, ds: &Dataset, seed: u64) -> Result<(Dataset, Dataset), CliError> {
        let (train, test) = train_test_split(
            ds,
            SplitConfig {
                test_count: self.test_count,
                seed,
            },
        )
        .map_err(|e| match e {
            DatasetError::TestCountTooLarge { .. } => usage(e.to_string()),
            e => runtime(e),
        })?;
        if self.standardize {
            standardize(&train, &test).map_err(runtime)
        } else {
            Ok((train, test))
        }
    }

    fn split(&self) -> Result<(Dataset, Dataset), CliError> {
        let ds = self.load()?;
        self.split_with(&ds, self.split_seed)
    }
}

fn model_spec(kind: ModelKind, t: &TrainerArgs) -> Result<ModelSpec, CliError> {
    let mut spec = ModelSpec::defaults(kind);
    if let Some(lr) = t.lr {
        spec.learning_rate = lr;
    }
    if let Some(l2) = t.l2 {
        spec.l2_strength = l2;
    }
    if let Some(epochs) = t.epochs {
        spec.epochs = epochs;
    }
    if let Some(seed) = t.train_seed {
        spec.train_seed = seed;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn mc_config(s: &SamplingArgs) -> Result<McConfig, CliError> {
    let cfg = McConfig {
        max_permutations: s.permutations,
        master_seed: s.seed,
        convergence_epsilon: s.epsilon,
        convergence_window: s.window,
        workers: s.workers,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeConfig {
    pub data: DataConfig,
    pub model: ModelSpec,
    pub modes: Vec<AggregationMode>,
    pub sampling: McConfig,
    pub exact: bool,
    pub exact_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub data: DataConfig,
    pub split_seeds: Vec<u64>,
    pub models: Vec<ModelSpec>,
    pub evaluation: EvaluationConfig,
    pub sampling: McConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportConfig {
    pub data: DataConfig,
    pub values: PathBuf,
    pub mode: AggregationMode,
    pub k: usize,
    pub model: ModelSpec,
    pub sv_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Compute(ComputeConfig),
    Evaluate(EvaluateConfig),
    ExportFigure(ExportConfig),
}

/// What a run produced: the machine-readable payload plus an optional
/// human-readable view for stderr.
pub struct RunOutput {
    pub payload: String,
    pub display: Option<String>,
}

impl RunConfig {
    pub fn from_compute(a: &ComputeArgs) -> Result<Self, CliError> {
        if a.modes.is_empty() {
            return Err(usage("--modes needs at least one mode"));
        }
        Ok(Self::Compute(ComputeConfig {
            data: (&a.data).into(),
            model: model_spec(a.model, &a.trainer)?,
            modes: a.modes.clone(),
            sampling: mc_config(&a.sampling)?,
            exact: a.exact,
            exact_cap: a.exact_cap,
        }))
    }

    pub fn from_evaluate(a: &EvaluateArgs) -> Result<Self, CliError> {
        if a.models.is_empty() {
            return Err(usage("--models needs at least one model"));
        }
        let mut seen = BTreeSet::new();
        for kind in &a.models {
            if !seen.insert(*kind) {
                return Err(usage(format!("model `{kind}` listed twice")));
            }
        }
        if a.k == 0 || a.overlap_k == 0 {
            return Err(usage("--k and --overlap-k must be at least 1"));
        }
        let split_seeds = if a.split_seeds.is_empty() {
            vec![a.data.split_seed]
        } else {
            a.split_seeds.clone()
        };
        Ok(Self::Evaluate(EvaluateConfig {
            data: (&a.data).into(),
            split_seeds,
            models: a.models.iter().map(|&k| ModelSpec::defaults(k)).collect(),
            evaluation: EvaluationConfig {
                k: a.k,
                overlap_k: a.overlap_k,
                sv_tolerance: a.sv_tol,
            },
            sampling: mc_config(&a.sampling)?,
        }))
    }

    pub fn from_export(a: &ExportArgs) -> Result<Self, CliError> {
        if a.k == 0 {
            return Err(usage("--k must be at least 1"));
        }
        Ok(Self::ExportFigure(ExportConfig {
            data: (&a.data).into(),
            values: a.values.clone(),
            mode: a.mode,
            k: a.k,
            model: model_spec(ModelKind::LinearSvm, &a.trainer)?,
            sv_tolerance: a.sv_tol,
        }))
    }

    pub fn execute(&self) -> Result<RunOutput, CliError> {
        match self {
            RunConfig::Compute(c) => run_compute(c),
            RunConfig::Evaluate(c) => run_evaluate(c),
            RunConfig::ExportFigure(c) => run_export(c),
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(runtime)?;
    s.push('\n');
    Ok(s)
}

fn run_compute(c: &ComputeConfig) -> Result<RunOutput, CliError> {
    let (train_set, test) = c.data.split()?;
    let utility = ModelUtility::new(c.model, &train_set, &test).map_err(runtime)?;
    let n = train_set.len();
    let estimates = if c.exact {
        let mut modes = c.modes.clone();
        modes.sort_unstable();
        modes.dedup();
        let values = exact_shapley_modes(&utility, n, &modes, c.exact_cap).map_err(runtime)?;
        let orderings = (1..=n as u64).product::<u64>() as usize;
        modes
            .iter()
            .zip(values)
            .map(|(&mode, values)| ShapleyEstimate {
                mode,
                seed: 0,
                variances: vec![0.0; n],
                sample_counts: vec![orderings; n],
                values,
                permutations_used: orderings,
                converged: true,
            })
            .collect()
    } else {
        monte_carlo_shapley(&utility, n, &c.modes, &c.sampling).map_err(runtime)?
    };
    let docs: Vec<EstimateDocument> = estimates.iter().map(|e| e.to_document(train_set.ids())).collect();
    Ok(RunOutput {
        payload: to_json(&docs)?,
        display: None,
    })
}

fn run_evaluate(c: &EvaluateConfig) -> Result<RunOutput, CliError> {
    let ds = c.data.load()?;
    if c.data.test_count > ds.len() {
        return Err(usage(format!(
            "--test-count {} exceeds dataset size {}",
            c.data.test_count,
            ds.len()
        )));
    }
    let train_size = ds.len() - c.data.test_count;
    if c.evaluation.k > train_size {
        return Err(usage(format!("--k {} exceeds training-set size {train_size}", c.evaluation.k)));
    }
    let standardize_splits = c.data.standardize;
    let result = evaluate_splits_with(
        &ds,
        c.data.test_count,
        &c.split_seeds,
        &c.models,
        &c.evaluation,
        &c.sampling,
        |train, test| {
            if standardize_splits {
                Ok(standardize(&train, &test)?)
            } else {
                Ok((train, test))
            }
        },
    )
    .map_err(runtime)?;
    Ok(RunOutput {
        payload: to_json(&result)?,
        display: Some(result.text_table()),
    })
}

fn read_documents(path: &PathBuf) -> anyhow::Result<Vec<EstimateDocument>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read values file {}", path.display()))?;
    if text.trim().is_empty() {
        bail!("values file {} is empty", path.display());
    }
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("values file {} is not JSON", path.display()))?;
    let docs = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    Ok(docs)
}

fn run_export(c: &ExportConfig) -> Result<RunOutput, CliError> {
    let docs = read_documents(&c.values)?;
    let doc = docs
        .iter()
        .find(|d| d.mode == c.mode)
        .ok_or_else(|| runtime(anyhow::anyhow!("values file has no `{}` estimate", c.mode)))?;
    let (train_set, _) = c.data.split()?;
    if train_set.dim() < 2 {
        return Err(runtime(anyhow::anyhow!("figure export needs at least two feature columns")));
    }

    let by_id: BTreeMap<usize, f64> = doc.values.iter().map(|v| (v.id, v.value)).collect();
    let expected: BTreeSet<usize> = train_set.ids().iter().copied().collect();
    if by_id.len() != doc.values.len() || by_id.keys().copied().collect::<BTreeSet<_>>() != expected {
        return Err(runtime(anyhow::anyhow!(
            "values file ids do not match the training split ({} values, {} training tuples)",
            doc.values.len(),
            train_set.len()
        )));
    }
    if c.k > train_set.len() {
        return Err(usage(format!("--k {} exceeds training-set size {}", c.k, train_set.len())));
    }
    let values: Vec<f64> = train_set.ids().iter().map(|id| by_id[id]).collect();
    let highest: BTreeSet<usize> = rank_topk(&values, train_set.ids(), c.k, SelectionDirection::Highest)
        .map_err(runtime)?
        .into_iter()
        .collect();
    let lowest: BTreeSet<usize> = rank_topk(&values, train_set.ids(), c.k, SelectionDirection::Lowest)
        .map_err(runtime)?
        .into_iter()
        .collect();
    let model = train(&c.model, &train_set).map_err(runtime)?;
    let svs = if model.is_fallback() {
        BTreeSet::new()
    } else {
        support_vectors(&model, &train_set, c.sv_tolerance).map_err(runtime)?
    };

    let mut csv = String::from("id,x1,x2,label,is_support_vector,in_highest10,in_lowest10\n");
    for i in 0..train_set.len() {
        let id = train_set.ids()[i];
        let x = train_set.row(i);
        let _ = writeln!(
            csv,
            "{id},{},{},{},{},{},{}",
            x[0],
            x[1],
            train_set.label(i),
            u8::from(svs.contains(&id)),
            u8::from(highest.contains(&id)),
            u8::from(lowest.contains(&id)),
        );
    }
    Ok(RunOutput {
        payload: csv,
        display: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub run: RunConfig,
    pub output: Option<PathBuf>,
    pub duration_ms: u64,
}
