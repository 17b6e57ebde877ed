/// Exact floating-point accumulator (Shewchuk's non-overlapping partials).
///
/// [`ExactSum::value`] is the correctly rounded sum of every value added so
/// far, independent of insertion order. Correct rounding is monotone, so
/// termwise `a_k >= b_k` implies `sum(a) >= sum(b)` with no tolerance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a finite value.
    pub fn add(&mut self, mut x: f64) {
        debug_assert!(x.is_finite());
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // round-half-even correction when the remaining partials push the
        // discarded half-ulp over the edge
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl Extend<f64> for ExactSum {
    fn extend<T: IntoIterator<Item = f64>>(&mut self, iter: T) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancels_exactly() {
        let s: ExactSum = [1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(s.value(), 1.0);
        let s: ExactSum = std::iter::repeat(0.1).take(10).collect();
        assert_eq!(s.value(), 1.0);
        assert_eq!(ExactSum::new().value(), 0.0);
    }

    proptest! {
        // Oracle: integers scaled by a power of two sum exactly in i128.
        #[test]
        fn matches_integer_oracle(xs in proptest::collection::vec(-1_000_000_000i64..1_000_000_000, 0..200)) {
            let scale = 2f64.powi(-30);
            let s: ExactSum = xs.iter().map(|&x| x as f64 * scale).collect();
            let exact: i128 = xs.iter().map(|&x| x as i128).sum();
            prop_assert_eq!(s.value(), exact as f64 * scale);
        }

        #[test]
        fn order_independent(mut xs in proptest::collection::vec(-1e3f64..1e3, 0..100)) {
            let a: ExactSum = xs.iter().copied().collect();
            xs.reverse();
            let b: ExactSum = xs.iter().copied().collect();
            prop_assert_eq!(a.value(), b.value());
        }

        #[test]
        fn monotone_termwise(pairs in proptest::collection::vec((-1.0f64..1.0, 0.0f64..1e-3), 1..100)) {
            let lo: ExactSum = pairs.iter().map(|(a, _)| *a).collect();
            let hi: ExactSum = pairs.iter().map(|(a, d)| a + d).collect();
            prop_assert!(hi.value() >= lo.value());
        }
    }
}
