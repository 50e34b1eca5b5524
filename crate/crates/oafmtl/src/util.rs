//! Small numeric helpers shared across modules.
//!
//! Reductions over long vectors use fixed-order pairwise summation: the
//! result is independent of thread count (the order is part of the
//! definition) and the rounding error grows like O(log n) instead of O(n).

/// Pairwise sum of a slice in a fixed order.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if x.len() <= BLOCK {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

/// Pairwise sum of `f` applied to each element.
pub fn pairwise_sum_by(x: &[f64], f: impl Fn(f64) -> f64 + Copy) -> f64 {
    const BLOCK: usize = 64;
    if x.len() <= BLOCK {
        return x.iter().map(|&v| f(v)).sum();
    }
    let mid = x.len() / 2;
    pairwise_sum_by(&x[..mid], f) + pairwise_sum_by(&x[mid..], f)
}

/// Squared Euclidean norm with pairwise accumulation.
pub fn norm_sq(x: &[f64]) -> f64 {
    pairwise_sum_by(x, |v| v * v)
}

/// Squared Euclidean distance between two equal-length slices.
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= BLOCK {
        return a
            .iter()
            .zip(b.iter())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
    }
    let mid = a.len() / 2;
    dist_sq(&a[..mid], &b[..mid]) + dist_sq(&a[mid..], &b[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_inputs() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = x.iter().sum();
        assert!((pairwise_sum(&x) - naive).abs() < 1e-9);
        let nsq: f64 = x.iter().map(|v| v * v).sum();
        assert!((norm_sq(&x) - nsq).abs() < 1e-9);
    }

    #[test]
    fn dist_sq_of_identical_vectors_is_zero() {
        let x: Vec<f64> = (0..257).map(|i| i as f64 * 0.25).collect();
        assert_eq!(dist_sq(&x, &x), 0.0);
    }
}
