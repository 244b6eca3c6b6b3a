//! Small statistics helpers for the studies.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson chi-square p-value for observed counts against expected
/// probabilities (conditioned on the partition). Degrees of freedom are
/// `cells - 1`.
pub fn chi_square_pvalue(observed: &[u64], expected_prob: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected_prob.len());
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected_prob.iter()) {
        let e = n * p;
        if e > 0.0 {
            stat += (o as f64 - e).powi(2) / e;
        }
    }
    let dof = (observed.len() - 1) as f64;
    let dist = ChiSquared::new(dof).expect("positive dof");
    1.0 - dist.cdf(stat)
}

/// Median of a sample (average of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Empirical m-th-moment norm estimator: `(mean of x^m)^{1/m}`.
pub fn moment_norm(values: &[f64], m: f64) -> f64 {
    let mean = values.iter().map(|v| v.powf(m)).sum::<f64>() / values.len() as f64;
    mean.powf(1.0 / m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_uniform_counts() {
        // perfectly matching counts give p ~ 1
        let obs = vec![100u64; 10];
        let prob = vec![0.1; 10];
        assert!(chi_square_pvalue(&obs, &prob) > 0.99);
        // grossly mismatched counts give p ~ 0
        let mut bad = obs.clone();
        bad[0] = 600;
        bad[1] = 0;
        let total: u64 = bad.iter().sum();
        let _ = total;
        assert!(chi_square_pvalue(&bad, &prob) < 1e-6);
    }

    #[test]
    fn median_and_moment() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let vals = [1.0, 2.0, 3.0];
        assert!((moment_norm(&vals, 1.0) - 2.0).abs() < 1e-14);
        let m2 = ((1.0 + 4.0 + 9.0) / 3.0f64).sqrt();
        assert!((moment_norm(&vals, 2.0) - m2).abs() < 1e-14);
    }
}
