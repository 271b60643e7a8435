//! Order-independent summation.
//!
//! Stage scores are means over frames; with these helpers the result does
//! not depend on frame order and equals the exact mean rounded once.

/// Non-overlapping partial sums whose exact total is the sum of the inputs
/// (Shewchuk's algorithm).
fn add_to_partials(partials: &mut Vec<f64>, mut x: f64) {
    let mut i = 0;
    for j in 0..partials.len() {
        let mut y = partials[j];
        if x.abs() < y.abs() {
            std::mem::swap(&mut x, &mut y);
        }
        let hi = x + y;
        let lo = y - (hi - x);
        if lo != 0.0 {
            partials[i] = lo;
            i += 1;
        }
        x = hi;
    }
    partials.truncate(i);
    partials.push(x);
}

/// Rounds an expansion to the nearest double.
fn round_partials(partials: &[f64]) -> f64 {
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // half-way correction
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

fn partials_of(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut p = Vec::new();
    for v in values {
        add_to_partials(&mut p, v);
    }
    p
}

/// Correctly rounded sum of finite values.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    round_partials(&partials_of(values))
}

/// Mean with the sum kept exact and one correction step on the quotient.
/// `None` for an empty input.
pub fn exact_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut count = 0usize;
    let mut partials = Vec::new();
    for v in values {
        add_to_partials(&mut partials, v);
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let n = count as f64;
    let q = round_partials(&partials) / n;
    // exact residual: sum - q*n
    let prod = q * n;
    let prod_err = q.mul_add(n, -prod);
    add_to_partials(&mut partials, -prod);
    add_to_partials(&mut partials, -prod_err);
    let r = round_partials(&partials);
    Some(q + r / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_means() {
        assert_eq!(exact_mean([0.8, 0.6, 0.7]), Some(0.7));
        assert_eq!(exact_mean([0.9, 0.95]), Some(0.925));
        assert_eq!(exact_mean([0.8, 0.6]), Some(0.7));
        assert_eq!(exact_mean(std::iter::empty()), None);
    }

    #[test]
    fn sum_cancellation() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
    }

    proptest! {
        #[test]
        fn mean_is_permutation_invariant(mut xs in proptest::collection::vec(0.0f64..1.0, 1..40), seed in any::<u64>()) {
            let a = exact_mean(xs.iter().copied()).unwrap();
            // cheap deterministic shuffle
            let mut s = seed | 1;
            for i in (1..xs.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                xs.swap(i, (s % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(a, exact_mean(xs.iter().copied()).unwrap());
        }

        #[test]
        fn mean_of_constant_is_constant(x in 0.0f64..1.0, n in 1usize..50) {
            prop_assert_eq!(exact_mean(std::iter::repeat_n(x, n)).unwrap(), x);
        }

        #[test]
        fn mean_stays_in_bounds(xs in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
            let m = exact_mean(xs.iter().copied()).unwrap();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= m && m <= hi);
        }
    }
}
