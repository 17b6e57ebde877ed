use super::{eval, Result, ShapleyError, Utility};

/// Leave-one-out value `U(N) − U(N ∖ {i})` for every player; `n + 1`
/// utility evaluations.
pub fn loo_values(u: &dyn Utility, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(ShapleyError::NoPlayers);
    }
    let all: Vec<usize> = (0..n).collect();
    let full = eval(u, &all)?;
    let mut without = Vec::with_capacity(n - 1);
    (0..n)
        .map(|i| {
            without.clear();
            without.extend((0..n).filter(|&p| p != i));
            Ok(full - eval(u, &without)?)
        })
        .collect()
}
