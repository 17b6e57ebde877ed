use super::{eval, transform_marginal, AggregationMode, ExactSum, Result, ShapleyError, Utility};

/// Largest player count accepted without an explicit cap override.
pub const DEFAULT_EXACT_CAP: usize = 12;

/// Hard ceiling for the memo table (2^n utilities held in memory).
pub const MAX_EXACT_PLAYERS: usize = 24;

/// Exact value of every player under one aggregation mode, with the default
/// player cap.
pub fn exact_shapley(u: &dyn Utility, n: usize, mode: AggregationMode) -> Result<Vec<f64>> {
    let mut all = exact_shapley_modes(u, n, &[mode], DEFAULT_EXACT_CAP)?;
    Ok(all.remove(0))
}

/// Exact values for each of `modes`, sharing one memo table of all `2^n`
/// subset utilities.
///
/// A player's value is the permutation average of its transformed
/// marginals, computed per coalition `S` not containing `i` with the weight
/// `|S|! (n-|S|-1)! / n! = 1 / (n * C(n-1, |S|))` — the fraction of orderings
/// in which exactly `S` precedes `i`. Subsets are visited in ascending
/// bitmask order.
pub fn exact_shapley_modes(
    u: &dyn Utility,
    n: usize,
    modes: &[AggregationMode],
    cap: usize,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(ShapleyError::NoPlayers);
    }
    if modes.is_empty() {
        return Err(ShapleyError::NoModes);
    }
    let cap = cap.min(MAX_EXACT_PLAYERS);
    if n > cap {
        return Err(ShapleyError::ExactCapExceeded { n, cap });
    }

    let subsets = 1usize << n;
    let mut table = Vec::with_capacity(subsets);
    let mut coalition = Vec::with_capacity(n);
    for mask in 0..subsets {
        coalition.clear();
        coalition.extend((0..n).filter(|&p| mask & (1 << p) != 0));
        table.push(eval(u, &coalition)?);
    }

    let weights: Vec<f64> = (0..n).map(|s| 1.0 / (n as f64 * binomial(n - 1, s))).collect();

    let mut sums = vec![vec![ExactSum::new(); n]; modes.len()];
    for i in 0..n {
        let bit = 1usize << i;
        for mask in (0..subsets).filter(|m| m & bit == 0) {
            let delta = table[mask | bit] - table[mask];
            let w = weights[mask.count_ones() as usize];
            for (m, &mode) in modes.iter().enumerate() {
                sums[m][i].add(w * transform_marginal(delta, mode));
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|per_player| per_player.iter().map(ExactSum::value).collect())
        .collect())
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64).round()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::AggregationMode::*;

    /// Independent oracle: literal average over all n! orderings.
    fn permutation_oracle(u: &dyn Fn(&[usize]) -> f64, n: usize, mode: AggregationMode) -> Vec<f64> {
        fn permute(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if rest.is_empty() {
                out.push(prefix.clone());
                return;
            }
            for k in 0..rest.len() {
                let p = rest.remove(k);
                prefix.push(p);
                permute(prefix, rest, out);
                prefix.pop();
                rest.insert(k, p);
            }
        }
        let mut perms = Vec::new();
        permute(&mut Vec::new(), &mut (0..n).collect(), &mut perms);
        let mut acc = vec![0.0; n];
        for perm in &perms {
            for pos in 0..n {
                let mut before: Vec<usize> = perm[..pos].to_vec();
                before.sort_unstable();
                let mut with = perm[..=pos].to_vec();
                with.sort_unstable();
                acc[perm[pos]] += transform_marginal(u(&with) - u(&before), mode);
            }
        }
        acc.iter().map(|a| a / perms.len() as f64).collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn additive_game() {
        let w = [1.0, 2.0, 3.0];
        let u = |s: &[usize]| s.iter().map(|&i| w[i]).sum::<f64>();
        let oracle = permutation_oracle(&u, 3, Original);
        assert!(close(&oracle, &w, 1e-12));
        let v = exact_shapley(&u, 3, Original).unwrap();
        assert!(close(&v, &w, 1e-12), "{v:?}");
    }

    #[test]
    fn symmetric_game_all_modes() {
        let u = |s: &[usize]| s.len() as f64 / 4.0;
        for mode in AggregationMode::ALL {
            let v = exact_shapley(&u, 4, mode).unwrap();
            assert!(close(&v, &[0.25; 4], 1e-12), "{mode}: {v:?}");
        }
    }

    #[test]
    fn majority_game() {
        let u = |s: &[usize]| if s.len() >= 2 { 1.0 } else { 0.0 };
        let oracle = permutation_oracle(&u, 3, Original);
        assert!(close(&oracle, &[1.0 / 3.0; 3], 1e-12));
        let v = exact_shapley(&u, 3, Original).unwrap();
        assert!(close(&v, &oracle, 1e-12));
    }

    #[test]
    fn two_player_mixed_signs() {
        // u(∅)=0, u({0})=1, u({1})=0, u({0,1})=0.5
        let u = |s: &[usize]| match s {
            [] => 0.0,
            [0] => 1.0,
            [1] => 0.0,
            _ => 0.5,
        };
        let ori = exact_shapley(&u, 2, Original).unwrap();
        let zero = exact_shapley(&u, 2, Zero).unwrap();
        let abs = exact_shapley(&u, 2, Absolute).unwrap();
        for (mode, v) in [(Original, &ori), (Zero, &zero), (Absolute, &abs)] {
            assert!(close(v, &permutation_oracle(&u, 2, mode), 1e-12));
        }
        assert!(close(&ori, &[0.75, -0.25], 1e-12));
        assert!(close(&zero, &[0.75, 0.0], 1e-12));
        assert!(close(&abs, &[0.75, 0.25], 1e-12));
    }

    #[test]
    fn matches_permutation_oracle_on_irregular_game() {
        let u = |s: &[usize]| {
            let mask: usize = s.iter().map(|&i| 1 << i).sum();
            ((mask * 2654435761) % 1000) as f64 / 1000.0
        };
        for mode in AggregationMode::ALL {
            let v = exact_shapley(&u, 5, mode).unwrap();
            assert!(close(&v, &permutation_oracle(&u, 5, mode), 1e-12), "{mode}");
        }
    }

    #[test]
    fn cap_guard() {
        let u = |s: &[usize]| s.len() as f64;
        let err = exact_shapley(&u, 13, Original).unwrap_err();
        assert_eq!(err.to_string(), "exact enumeration capped at n=12 (got n=13)");
        assert!(exact_shapley_modes(&u, 13, &[Original], 13).is_ok());
        assert!(matches!(exact_shapley(&u, 0, Original), Err(ShapleyError::NoPlayers)));
    }

    #[test]
    fn utility_failure_carries_coalition() {
        struct Failing;
        impl Utility for Failing {
            fn evaluate(&self, c: &[usize]) -> std::result::Result<f64, crate::shapley::UtilityError> {
                if c == [0, 2] {
                    Err(crate::shapley::UtilityError("boom".into()))
                } else {
                    Ok(0.0)
                }
            }
        }
        match exact_shapley(&Failing, 3, Original) {
            Err(ShapleyError::Utility { coalition, .. }) => assert_eq!(coalition, vec![0, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(11, 0), 1.0);
        assert_eq!(binomial(11, 5), 462.0);
        assert_eq!(binomial(23, 11), 1352078.0);
    }
}
