//! Deterministic reductions.
//!
//! Results assembled by parallel workers are reduced in slice order with
//! compensated (Neumaier) summation, so the floating-point result is
//! independent of thread scheduling, identical to a serial run, and
//! carries an error bound independent of the length of the sum.

/// Fixed-order compensated summation (Neumaier's variant of Kahan's
/// algorithm): exact for sums whose condition number fits one
/// compensation term, and never worse than naive summation.
pub fn stable_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean via compensated summation.
pub fn stable_mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    stable_sum(xs) / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_exact_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(stable_sum(&xs), 500_500.0);
    }

    #[test]
    fn more_accurate_than_naive_on_cancellation() {
        // Many tiny values against one large one.
        let mut xs = vec![1e16];
        xs.extend(std::iter::repeat(1.0).take(4096));
        xs.push(-1e16);
        let got = stable_sum(&xs);
        assert_eq!(got, 4096.0);
    }

    #[test]
    fn deterministic_under_chunked_assembly() {
        let xs: Vec<f64> =
            (0..10_000).map(|i| ((i * 2_654_435_761u64 as usize) as f64).sin()).collect();
        let direct = stable_sum(&xs);
        // Assembling the same values from chunks preserves slice order,
        // hence the identical reduction.
        let mut assembled = Vec::new();
        for c in xs.chunks(977) {
            assembled.extend_from_slice(c);
        }
        assert_eq!(direct, stable_sum(&assembled));
    }
}
