//! Training-data valuation with Shapley values.
//!
//! Each training tuple is a player; a coalition's utility is the test
//! accuracy of a model trained on it. Values can be computed exactly for
//! small player sets or estimated by permutation sampling, under three
//! marginal aggregation rules: the original marginal, the marginal clamped
//! at zero, and its absolute value.

pub mod dataset;
pub mod evaluation;
pub mod model;
pub mod shapley;

pub use dataset::{filter_iris_2d, load_csv, subset, train_test_split, Dataset, DatasetError, SplitConfig};
pub use evaluation::{
    compare_modes, evaluate_splits, rank_topk, retrain_with_selection, support_vector_overlap, EvaluationConfig,
    EvaluationError, EvaluationReport, SelectionDirection, SplitEvaluation,
};
pub use model::{
    accuracy, predict, support_vectors, train, utility, ModelError, ModelKind, ModelSpec, ModelUtility,
    TrainedModel,
};
pub use shapley::{
    exact_shapley, exact_shapley_modes, has_converged, loo_values, monte_carlo_shapley, transform_marginal,
    AggregationMode, McConfig, ShapleyError, ShapleyEstimate, Utility,
};
