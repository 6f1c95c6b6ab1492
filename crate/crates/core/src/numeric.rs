//! Small numeric helpers shared across the crate.
//!
//! Everything downstream stores marginals as logarithms, so the one primitive
//! that has to be right is a stable log-sum-exp. Both helpers subtract the
//! running maximum before exponentiating, which keeps the computation exact
//! for inputs as skewed as eta * cost ~ 350 (the largest magnitude the
//! experiment protocol produces).

/// Stable log(sum(exp(x))) over a slice.
///
/// Returns `-inf` for an empty slice or when every entry is `-inf`; any `+inf`
/// input propagates as `+inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    log_sum_exp_iter(xs.iter().copied())
}

/// Stable log-sum-exp over an iterator, without allocating.
///
/// The iterator is consumed twice (max pass, then sum pass), hence `Clone`.
/// Useful for strided access such as one row or column of a flattened d x d
/// block.
pub fn log_sum_exp_iter<I>(xs: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // All -inf (empty sum), or a +inf/NaN that should propagate as-is.
        return max;
    }
    let sum: f64 = xs.map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Median of a list of values (average of the middle pair for even lengths).
/// Returns `None` for an empty input.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_evaluation() {
        let xs = [0.0, (2.0f64).ln(), (3.0f64).ln()];
        assert!((log_sum_exp(&xs) - (6.0f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_is_stable_for_large_magnitudes() {
        // Direct exp would overflow; the shifted form must not.
        let xs = [700.0, 700.0 - (2.0f64).ln()];
        let expected = 700.0 + (1.5f64).ln();
        assert!((log_sum_exp(&xs) - expected).abs() < 1e-12);

        let xs = [-745.0, -745.0];
        let expected = -745.0 + (2.0f64).ln();
        assert!((log_sum_exp(&xs) - expected).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_degenerate_inputs() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        assert_eq!(log_sum_exp(&[f64::INFINITY, 0.0]), f64::INFINITY);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
