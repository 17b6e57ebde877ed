//! Permutation-sampling estimator.
//!
//! Permutation `k` is drawn from a ChaCha8 stream selected by
//! `(master_seed, k)`, so its content does not depend on which worker draws
//! it. Workers return whole marginal vectors; the fold into the
//! accumulators runs on the calling thread in ascending `k`, which makes the
//! result independent of the worker count and of scheduling.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{eval, transform_marginal, AggregationMode, ExactSum, Result, ShapleyError, Utility};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub max_permutations: usize,
    pub master_seed: u64,
    /// Zero disables early stopping.
    pub convergence_epsilon: f64,
    pub convergence_window: usize,
    pub workers: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            max_permutations: 1000,
            master_seed: 0,
            convergence_epsilon: 1e-3,
            convergence_window: 100,
            workers: 1,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_permutations == 0 {
            return Err(ShapleyError::InvalidConfig("max_permutations must be >= 1".into()));
        }
        if self.convergence_window == 0 {
            return Err(ShapleyError::InvalidConfig("convergence_window must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(ShapleyError::InvalidConfig("workers must be >= 1".into()));
        }
        if !(self.convergence_epsilon >= 0.0) {
            return Err(ShapleyError::InvalidConfig("convergence_epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

/// Uniform permutation of `0..n` by Fisher–Yates.
pub fn sample_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Counter-addressed permutation source: the `k`-th permutation depends only
/// on the master seed and `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationStream {
    master_seed: u64,
}

impl PermutationStream {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn permutation(&self, index: u64, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index);
        sample_permutation(&mut rng, n)
    }
}

/// True iff `history` holds more than `window` snapshots and no tuple moved
/// by `epsilon` or more between the latest snapshot and the one `window`
/// steps earlier. `epsilon == 0` never converges.
pub fn has_converged(history: &[Vec<f64>], epsilon: f64, window: usize) -> bool {
    if window == 0 || history.len() <= window {
        return false;
    }
    let now = &history[history.len() - 1];
    let then = &history[history.len() - 1 - window];
    now.iter()
        .zip(then)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        < epsilon
}

/// Per-tuple result of the estimator for one aggregation mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyEstimate {
    pub mode: AggregationMode,
    pub seed: u64,
    /// Mean transformed marginal per tuple.
    pub values: Vec<f64>,
    /// Unbiased sample variance of the transformed marginals per tuple.
    pub variances: Vec<f64>,
    pub sample_counts: Vec<usize>,
    pub permutations_used: usize,
    pub converged: bool,
}

impl ShapleyEstimate {
    /// Standard error of `values[i]`.
    pub fn standard_error(&self, i: usize) -> f64 {
        if self.sample_counts[i] == 0 {
            return f64::INFINITY;
        }
        (self.variances[i] / self.sample_counts[i] as f64).sqrt()
    }

    /// Serializable view keyed by tuple ids (`ids[i]` names player `i`).
    pub fn to_document(&self, ids: &[usize]) -> EstimateDocument {
        assert_eq!(ids.len(), self.values.len(), "one id per player");
        EstimateDocument {
            mode: self.mode,
            seed: self.seed,
            permutations: self.permutations_used,
            converged: self.converged,
            values: ids
                .iter()
                .zip(self.values.iter().zip(&self.variances))
                .map(|(&id, (&value, &variance))| TupleValue { id, value, variance })
                .collect(),
        }
    }
}

/// JSON form of an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDocument {
    pub mode: AggregationMode,
    pub seed: u64,
    pub permutations: usize,
    pub converged: bool,
    pub values: Vec<TupleValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleValue {
    pub id: usize,
    pub value: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }
}

struct ModeAccumulator {
    mode: AggregationMode,
    sums: Vec<ExactSum>,
    stats: Vec<Welford>,
    // last `window + 1` normalized running means
    recent: VecDeque<Vec<f64>>,
    converged: bool,
}

impl ModeAccumulator {
    fn new(mode: AggregationMode, n: usize) -> Self {
        Self {
            mode,
            sums: vec![ExactSum::new(); n],
            stats: vec![Welford::default(); n],
            recent: VecDeque::new(),
            converged: false,
        }
    }

    fn push(&mut self, raw: &[f64], used: usize, cfg: &McConfig) {
        for (i, &delta) in raw.iter().enumerate() {
            let t = transform_marginal(delta, self.mode);
            self.sums[i].add(t);
            self.stats[i].push(t);
        }
        if cfg.convergence_epsilon > 0.0 {
            let means = self.means(used);
            if self.recent.len() > cfg.convergence_window {
                self.recent.pop_front();
            }
            self.recent.push_back(means);
            self.converged = has_converged(
                self.recent.make_contiguous(),
                cfg.convergence_epsilon,
                cfg.convergence_window,
            );
        }
    }

    fn means(&self, used: usize) -> Vec<f64> {
        self.sums.iter().map(|s| s.value() / used as f64).collect()
    }

    fn finish(self, used: usize, seed: u64) -> ShapleyEstimate {
        ShapleyEstimate {
            mode: self.mode,
            seed,
            values: self.means(used),
            variances: self.stats.iter().map(Welford::variance).collect(),
            sample_counts: self.stats.iter().map(|s| s.count).collect(),
            permutations_used: used,
            converged: self.converged,
        }
    }
}

/// Raw marginal of every player along one ordering, indexed by player.
fn permutation_marginals(u: &dyn Utility, perm: &[usize], empty_value: f64) -> Result<Vec<f64>> {
    let mut marginals = vec![0.0; perm.len()];
    let mut prev = empty_value;
    for pos in 0..perm.len() {
        let current = eval(u, &perm[..=pos])?;
        marginals[perm[pos]] = current - prev;
        prev = current;
    }
    Ok(marginals)
}

/// Monte Carlo estimate for each of `modes` (deduplicated, in ascending
/// mode order).
///
/// Each sampled ordering is scanned once; its raw marginals are shared by
/// all modes. Sampling stops after `max_permutations`, or earlier once
/// [`has_converged`] holds for every requested mode on the same step.
/// Coalitions are handed to `u` in permutation order, not sorted.
pub fn monte_carlo_shapley(
    u: &dyn Utility,
    n: usize,
    modes: &[AggregationMode],
    cfg: &McConfig,
) -> Result<Vec<ShapleyEstimate>> {
    cfg.validate()?;
    if n == 0 {
        return Err(ShapleyError::NoPlayers);
    }
    let mut modes = modes.to_vec();
    modes.sort_unstable();
    modes.dedup();
    if modes.is_empty() {
        return Err(ShapleyError::NoModes);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ShapleyError::Pool(e.to_string()))?;
    let stream = PermutationStream::new(cfg.master_seed);
    let empty_value = eval(u, &[])?;
    let mut accs: Vec<ModeAccumulator> = modes.iter().map(|&m| ModeAccumulator::new(m, n)).collect();

    let batch = (cfg.workers * 4).max(8);
    let mut used = 0;
    'outer: while used < cfg.max_permutations {
        let end = (used + batch).min(cfg.max_permutations);
        let results: Vec<Result<Vec<f64>>> = pool.install(|| {
            (used..end)
                .into_par_iter()
                .map(|k| permutation_marginals(u, &stream.permutation(k as u64, n), empty_value))
                .collect()
        });
        for raw in results {
            let raw = raw?;
            used += 1;
            for acc in &mut accs {
                acc.push(&raw, used, cfg);
            }
            if accs.iter().all(|a| a.converged) {
                break 'outer;
            }
        }
    }
    Ok(accs.into_iter().map(|a| a.finish(used, cfg.master_seed)).collect())
}
