#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PercentileError {
    #[error("no samples")]
    EmptySamples,
    #[error("quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("non-finite sample")]
    NonFiniteSample,
}

/// Nearest-rank index (1-based) of quantile `q` among `n` sorted samples:
/// the smallest `k ≥ 1` with `k/n ≥ q`, i.e. `⌈q·n⌉` without the rounding
/// error of the product (0.3 × 10 is 3.0000000000000004 in binary).
pub fn nearest_rank(q: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut k = ((q * nf).ceil().max(1.0) as usize).min(n);
    while k > 1 && (k - 1) as f64 / nf >= q {
        k -= 1;
    }
    while k < n && (k as f64 / nf) < q {
        k += 1;
    }
    k
}

/// Nearest-rank percentiles of `samples`, one value per entry of `qs`.
pub fn percentiles(samples: &[f64], qs: &[f64]) -> Result<Vec<f64>, PercentileError> {
    if samples.is_empty() {
        return Err(PercentileError::EmptySamples);
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(PercentileError::NonFiniteSample);
    }
    if let Some(q) = qs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(PercentileError::InvalidQuantile(*q));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(qs
        .iter()
        .map(|q| sorted[nearest_rank(*q, sorted.len()) - 1])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_hundred() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentiles(&s, &[0.5, 0.95, 0.99]).unwrap(), vec![50.0, 95.0, 99.0]);
    }

    #[test]
    fn rank_ignores_product_rounding() {
        assert_eq!(nearest_rank(0.3, 10), 3);
        assert_eq!(nearest_rank(0.0, 10), 1);
        assert_eq!(nearest_rank(1.0, 10), 10);
    }

    #[test]
    fn single_sample() {
        assert_eq!(percentiles(&[7.0], &[0.0, 0.5, 1.0]).unwrap(), vec![7.0; 3]);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(percentiles(&[], &[0.5]), Err(PercentileError::EmptySamples));
    }
}
