//! Deterministic binary trainers and the accuracy utility.
//!
//! Both trainers run full-batch (sub)gradient descent from the zero vector
//! for a fixed number of epochs, so a trained model is a pure function of
//! `(spec, training rows)`. Rows are always presented in ascending position
//! order, which makes [`utility`] a set function of the coalition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{subset, Dataset, DatasetError};
use crate::shapley::{Utility, UtilityError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("binary-only trainer: found label {0}")]
    NotBinary(usize),
    #[error("training data has no feature columns")]
    NoFeatures,
    #[error("input has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("accuracy is undefined on an empty test set")]
    EmptyTestSet,
    #[error("support vectors need a trained linear SVM, not {0}")]
    NoMargin(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "logistic")]
    Logistic,
    #[serde(rename = "svm")]
    LinearSvm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::LinearSvm => "svm",
        }
    }

    /// Short column label used in report tables.
    pub fn short_name(self) -> &'static str {
        match self {
            Self::Logistic => "LR",
            Self::LinearSvm => "SVM",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" | "lr" => Ok(Self::Logistic),
            "svm" | "linear_svm" | "linear-svm" => Ok(Self::LinearSvm),
            other => Err(format!("unknown model kind `{other}` (expected logistic or svm)")),
        }
    }
}

/// Trainer configuration.
///
/// `train_seed` is recorded for reproducibility manifests; full-batch
/// training from zero draws no random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub learning_rate: f64,
    pub l2_strength: f64,
    pub epochs: usize,
    pub train_seed: u64,
}

impl ModelSpec {
    pub fn defaults(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Logistic => Self {
                kind,
                learning_rate: 0.1,
                l2_strength: 1e-4,
                epochs: 500,
                train_seed: 0,
            },
            ModelKind::LinearSvm => Self {
                kind,
                learning_rate: 0.1,
                l2_strength: 1e-2,
                epochs: 1000,
                train_seed: 0,
            },
        }
    }

    pub fn logistic() -> Self {
        Self::defaults(ModelKind::Logistic)
    }

    pub fn linear_svm() -> Self {
        Self::defaults(ModelKind::LinearSvm)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidSpec(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2_strength >= 0.0 && self.l2_strength.is_finite()) {
            return Err(ModelError::InvalidSpec(format!(
                "l2_strength must be nonnegative, got {}",
                self.l2_strength
            )));
        }
        if self.epochs == 0 {
            return Err(ModelError::InvalidSpec("epochs must be >= 1".into()));
        }
        Ok(())
    }

    /// Flat key-value form: `kind`, `learning_rate`, `l2_strength`,
    /// `epochs`, `train_seed`.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("kind".to_string(), self.kind.to_string()),
            ("learning_rate".to_string(), self.learning_rate.to_string()),
            ("l2_strength".to_string(), self.l2_strength.to_string()),
            ("epochs".to_string(), self.epochs.to_string()),
            ("train_seed".to_string(), self.train_seed.to_string()),
        ])
    }

    /// Inverse of [`ModelSpec::to_kv`]. `kind` is required; missing keys take
    /// the defaults of that kind.
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let bad = |key: &str, value: &str| ModelError::InvalidSpec(format!("bad value `{value}` for `{key}`"));
        let kind: ModelKind = kv
            .get("kind")
            .ok_or_else(|| ModelError::InvalidSpec("missing key `kind`".into()))?
            .parse()
            .map_err(ModelError::InvalidSpec)?;
        let mut spec = Self::defaults(kind);
        for (key, value) in kv {
            match key.as_str() {
                "kind" => {}
                "learning_rate" => spec.learning_rate = value.parse().map_err(|_| bad(key, value))?,
                "l2_strength" => spec.l2_strength = value.parse().map_err(|_| bad(key, value))?,
                "epochs" => spec.epochs = value.parse().map_err(|_| bad(key, value))?,
                "train_seed" => spec.train_seed = value.parse().map_err(|_| bad(key, value))?,
                other => return Err(ModelError::InvalidSpec(format!("unknown key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_kv().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for ModelSpec {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| ModelError::InvalidSpec(format!("expected key=value, got `{part}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_kv(&kv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predictor {
    Linear { weights: Vec<f64>, bias: f64 },
    /// Trained on a single-class coalition.
    Constant(usize),
    /// Trained on the empty coalition: uniform guessing over `classes`,
    /// scored at its expected accuracy `1 / classes`.
    Chance { classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub predictor: Predictor,
}

impl TrainedModel {
    pub fn linear(kind: ModelKind, weights: Vec<f64>, bias: f64) -> Self {
        Self {
            kind,
            predictor: Predictor::Linear { weights, bias },
        }
    }

    pub fn is_fallback(&self) -> bool {
        !matches!(self.predictor, Predictor::Linear { .. })
    }

    /// `w·x + b` for linear models.
    pub fn decision_value(&self, x: &[f64]) -> Option<f64> {
        match &self.predictor {
            Predictor::Linear { weights, bias } => Some(dot(weights, x) + bias),
            _ => None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_binary(ds: &Dataset) -> Result<()> {
    match ds.labels().iter().find(|&&l| l > 1) {
        Some(&l) => Err(ModelError::NotBinary(l)),
        None => Ok(()),
    }
}

pub fn train(spec: &ModelSpec, data: &Dataset) -> Result<TrainedModel> {
    fit(spec, data, false).map(|(model, _)| model)
}

/// Like [`train`], also returning the regularized objective evaluated at the
/// parameters entering each epoch (empty for fallback models).
pub fn train_with_curve(spec: &ModelSpec, data: &Dataset) -> Result<(TrainedModel, Vec<f64>)> {
    fit(spec, data, true)
}

fn fit(spec: &ModelSpec, data: &Dataset, record: bool) -> Result<(TrainedModel, Vec<f64>)> {
    spec.validate()?;
    check_binary(data)?;
    if data.dim() == 0 {
        return Err(ModelError::NoFeatures);
    }
    let fallback = |predictor| TrainedModel {
        kind: spec.kind,
        predictor,
    };
    if data.is_empty() {
        return Ok((
            fallback(Predictor::Chance {
                classes: data.num_classes().max(1),
            }),
            Vec::new(),
        ));
    }
    let first = data.label(0);
    if data.labels().iter().all(|&l| l == first) {
        return Ok((fallback(Predictor::Constant(first)), Vec::new()));
    }
    let (weights, bias, curve) = match spec.kind {
        ModelKind::Logistic => fit_logistic(spec, data, record),
        ModelKind::LinearSvm => fit_svm(spec, data, record),
    };
    Ok((TrainedModel::linear(spec.kind, weights, bias), curve))
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// mean log-loss + (l2/2)||w||², bias unpenalized
fn fit_logistic(spec: &ModelSpec, data: &Dataset, record: bool) -> (Vec<f64>, f64, Vec<f64>) {
    let d = data.dim();
    let m = data.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    let mut curve = Vec::with_capacity(if record { spec.epochs } else { 0 });
    for _ in 0..spec.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (x, &y) in data.rows().zip(data.labels()) {
            let z = dot(&w, x) + b;
            let r = sigmoid(z) - y as f64;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += r * xi;
            }
            grad_b += r;
            if record {
                loss += if y == 1 { softplus(-z) } else { softplus(z) };
            }
        }
        if record {
            curve.push(loss / m + 0.5 * spec.l2_strength * dot(&w, &w));
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= spec.learning_rate * (g / m + spec.l2_strength * *wi);
        }
        b -= spec.learning_rate * grad_b / m;
    }
    (w, b, curve)
}

// mean hinge + (l2/2)||w||², bias unpenalized. Constant-step subgradient
// steps do not decrease the objective monotonically, so the best iterate
// seen (first on ties) is returned.
fn fit_svm(spec: &ModelSpec, data: &Dataset, record: bool) -> (Vec<f64>, f64, Vec<f64>) {
    let d = data.dim();
    let m = data.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (f64::INFINITY, w.clone(), b);
    let mut grad = vec![0.0; d];
    let mut curve = Vec::with_capacity(if record { spec.epochs } else { 0 });

    let mut step = |w: &mut Vec<f64>, b: &mut f64, update: bool| -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        let mut hinge = 0.0;
        for (x, &y) in data.rows().zip(data.labels()) {
            let s = if y == 1 { 1.0 } else { -1.0 };
            let margin = s * (dot(w, x) + *b);
            if margin < 1.0 {
                hinge += 1.0 - margin;
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g -= s * xi;
                }
                grad_b -= s;
            }
        }
        let objective = hinge / m + 0.5 * spec.l2_strength * dot(w, w);
        if update {
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= spec.learning_rate * (g / m + spec.l2_strength * *wi);
            }
            *b -= spec.learning_rate * grad_b / m;
        }
        objective
    };

    for _ in 0..spec.epochs {
        let (w0, b0) = (w.clone(), b);
        let objective = step(&mut w, &mut b, true);
        if record {
            curve.push(objective);
        }
        if objective < best.0 {
            best = (objective, w0, b0);
        }
    }
    let objective = step(&mut w, &mut b, false);
    if objective < best.0 {
        best = (objective, w, b);
    }
    (best.1, best.2, curve)
}

/// Class for `x`: linear models return 1 iff `w·x + b > 0`; fallback models
/// return their constant class (class 0 for the chance predictor).
pub fn predict(model: &TrainedModel, x: &[f64]) -> Result<usize> {
    match &model.predictor {
        Predictor::Linear { weights, bias } => {
            if weights.len() != x.len() {
                return Err(ModelError::DimensionMismatch {
                    expected: weights.len(),
                    found: x.len(),
                });
            }
            Ok(usize::from(dot(weights, x) + bias > 0.0))
        }
        Predictor::Constant(c) => Ok(*c),
        Predictor::Chance { .. } => Ok(0),
    }
}

/// Fraction of `test` rows predicted correctly. The chance predictor scores
/// `1 / classes`.
pub fn accuracy(model: &TrainedModel, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(ModelError::EmptyTestSet);
    }
    if let Predictor::Chance { classes } = model.predictor {
        return Ok(1.0 / classes as f64);
    }
    let mut correct = 0usize;
    for (x, &y) in test.rows().zip(test.labels()) {
        if predict(model, x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Test accuracy of `spec` trained on the rows of `train` at `coalition`
/// (positions, any order, no duplicates).
pub fn utility(coalition: &[usize], spec: &ModelSpec, train_set: &Dataset, test: &Dataset) -> Result<f64> {
    let mut rows = coalition.to_vec();
    rows.sort_unstable();
    let data = subset(train_set, &rows)?;
    accuracy(&train(spec, &data)?, test)
}

/// [`utility`] packaged as a game over the rows of a training set.
#[derive(Debug, Clone, Copy)]
pub struct ModelUtility<'a> {
    spec: ModelSpec,
    train: &'a Dataset,
    test: &'a Dataset,
}

impl<'a> ModelUtility<'a> {
    pub fn new(spec: ModelSpec, train: &'a Dataset, test: &'a Dataset) -> Result<Self> {
        spec.validate()?;
        check_binary(train)?;
        if test.is_empty() {
            return Err(ModelError::EmptyTestSet);
        }
        if train.dim() != test.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: train.dim(),
                found: test.dim(),
            });
        }
        Ok(Self { spec, train, test })
    }

    pub fn players(&self) -> usize {
        self.train.len()
    }
}

impl Utility for ModelUtility<'_> {
    fn evaluate(&self, coalition: &[usize]) -> std::result::Result<f64, UtilityError> {
        utility(coalition, &self.spec, self.train, self.test).map_err(|e| UtilityError(e.to_string()))
    }
}

/// Ids of training tuples with margin `y'(w·x + b) <= 1 + tol`, `y' = ±1`.
pub fn support_vectors(model: &TrainedModel, train_set: &Dataset, tol: f64) -> Result<BTreeSet<usize>> {
    let weights = match &model.predictor {
        Predictor::Linear { weights, .. } if model.kind == ModelKind::LinearSvm => weights,
        Predictor::Linear { .. } => return Err(ModelError::NoMargin(format!("a {} model", model.kind))),
        _ => return Err(ModelError::NoMargin("a fallback model".into())),
    };
    if weights.len() != train_set.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: weights.len(),
            found: train_set.dim(),
        });
    }
    check_binary(train_set)?;
    let mut ids = BTreeSet::new();
    for i in 0..train_set.len() {
        let f = model.decision_value(train_set.row(i)).unwrap_or(f64::NAN);
        let s = if train_set.label(i) == 1 { 1.0 } else { -1.0 };
        if s * f <= 1.0 + tol {
            ids.insert(train_set.ids()[i]);
        }
    }
    Ok(ids)
}
