//! Shapley values of a cooperative game under three marginal-contribution
//! aggregation rules.
//!
//! Every estimator here reduces to averaging `transform(U(P ∪ {i}) − U(P))`
//! over orderings of the players, where `P` is the set of players preceding
//! `i`. [`AggregationMode`] picks the transform: identity (the classical
//! value), clamping at zero, or absolute value. Only the identity transform
//! yields a value satisfying efficiency and additivity; the other two are
//! importance scores sharing the same sampling machinery.

mod exact;
mod loo;
mod monte_carlo;
mod sum;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exact::{exact_shapley, exact_shapley_modes, DEFAULT_EXACT_CAP, MAX_EXACT_PLAYERS};
pub use loo::loo_values;
pub use monte_carlo::{
    has_converged, monte_carlo_shapley, sample_permutation, EstimateDocument, McConfig,
    PermutationStream, ShapleyEstimate, TupleValue,
};
pub use sum::ExactSum;

/// How a raw marginal contribution enters the average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AggregationMode {
    #[serde(rename = "ori")]
    Original,
    #[serde(rename = "zero")]
    Zero,
    #[serde(rename = "abs")]
    Absolute,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 3] = [Self::Original, Self::Zero, Self::Absolute];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Original => "ori",
            Self::Zero => "zero",
            Self::Absolute => "abs",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ori" | "original" => Ok(Self::Original),
            "zero" => Ok(Self::Zero),
            "abs" | "absolute" => Ok(Self::Absolute),
            other => Err(format!("unknown aggregation mode `{other}` (expected ori, zero or abs)")),
        }
    }
}

/// Applies the per-marginal transform of `mode` to `delta`.
#[inline]
pub fn transform_marginal(delta: f64, mode: AggregationMode) -> f64 {
    match mode {
        AggregationMode::Original => delta,
        AggregationMode::Zero => delta.max(0.0),
        AggregationMode::Absolute => delta.abs(),
    }
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct UtilityError(pub String);

/// A set function over players `0..n`.
///
/// Implementations must depend only on the set of players, not on the order
/// of `coalition`, and must be safe to call from several threads at once.
pub trait Utility: Sync {
    fn evaluate(&self, coalition: &[usize]) -> Result<f64, UtilityError>;
}

impl<F> Utility for F
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    fn evaluate(&self, coalition: &[usize]) -> Result<f64, UtilityError> {
        Ok(self(coalition))
    }
}

#[derive(Debug, Error)]
pub enum ShapleyError {
    #[error("exact enumeration capped at n={cap} (got n={n})")]
    ExactCapExceeded { n: usize, cap: usize },
    #[error("at least one player is required")]
    NoPlayers,
    #[error("at least one aggregation mode is required")]
    NoModes,
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(String),
    #[error("utility evaluation failed on coalition {coalition:?}: {source}")]
    Utility {
        coalition: Vec<usize>,
        #[source]
        source: UtilityError,
    },
    #[error("utility returned non-finite value {value} on coalition {coalition:?}")]
    NonFinite { coalition: Vec<usize>, value: f64 },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

pub type Result<T, E = ShapleyError> = std::result::Result<T, E>;

pub(crate) fn eval(u: &dyn Utility, coalition: &[usize]) -> Result<f64> {
    let value = u.evaluate(coalition).map_err(|source| ShapleyError::Utility {
        coalition: coalition.to_vec(),
        source,
    })?;
    if !value.is_finite() {
        return Err(ShapleyError::NonFinite {
            coalition: coalition.to_vec(),
            value,
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_examples() {
        use AggregationMode::*;
        assert_eq!(transform_marginal(-0.2, Original), -0.2);
        assert_eq!(transform_marginal(-0.2, Zero), 0.0);
        assert_eq!(transform_marginal(-0.2, Absolute), 0.2);
        for mode in AggregationMode::ALL {
            assert_eq!(transform_marginal(0.3, mode), 0.3);
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in AggregationMode::ALL {
            assert_eq!(mode.as_str().parse::<AggregationMode>().unwrap(), mode);
            let json = serde_json::to_string(&mode).unwrap();
            assert_eq!(json, format!("\"{}\"", mode.as_str()));
        }
        assert!("banzhaf".parse::<AggregationMode>().is_err());
    }
}
