//! Monte Carlo checks that simulated fractional paths reproduce the
//! statistics their covariance construction promises: increment variance,
//! the Hurst-driven growth of multi-step variance, and the lag-one
//! increment autocovariance.

use sigdraw::paths::{generate_fbm_paths, FbmConfig};

const SIGMA: f64 = 0.01;

fn simulate(hurst: f64, n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let cfg = FbmConfig { hurst, n, k, mu: 0.0, sigma: SIGMA, seed };
    generate_fbm_paths(&cfg).unwrap().into_iter().map(|p| p.values).collect()
}

fn increments(paths: &[Vec<f64>], step: usize) -> Vec<f64> {
    paths
        .iter()
        .flat_map(|p| p.windows(step + 1).map(|w| w[step] - w[0]))
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// One-step increments have variance `sigma^2` for every Hurst index.
#[test]
fn unit_step_variance_matches_sigma() {
    for (hurst, seed) in [(0.4, 1u64), (0.55, 2), (0.7, 3)] {
        let paths = simulate(hurst, 51, 20_000, seed);
        let incs = increments(&paths, 1);
        assert!(incs.len() >= 1_000_000);
        let ratio = variance(&incs) / (SIGMA * SIGMA);
        assert!(
            (ratio - 1.0).abs() < 0.02,
            "H={hurst}: variance ratio {ratio} should be 1 within 2%"
        );
    }
}

/// Two-step variance grows like `2^(2H)`: subdiffusive below H = 1/2,
/// superdiffusive above.
#[test]
fn two_step_variance_scales_with_hurst() {
    for (hurst, seed) in [(0.4, 4u64), (0.55, 5), (0.7, 6)] {
        let paths = simulate(hurst, 51, 20_000, seed);
        let v1 = variance(&increments(&paths, 1));
        let v2 = variance(&increments(&paths, 2));
        let expect = 2f64.powf(2.0 * hurst);
        let ratio = v2 / v1;
        assert!(
            (ratio / expect - 1.0).abs() < 0.05,
            "H={hurst}: 2-step/1-step variance {ratio}, expected {expect} within 5%"
        );
    }
}

/// Lag-one autocovariance of the increments matches
/// `sigma^2 (2^(2H) - 2) / 2`, the defining signature of long-range
/// dependence (negative below H = 1/2, positive above, zero at 1/2).
#[test]
fn lag_one_autocovariance_matches_theory() {
    for (hurst, seed) in [(0.4, 7u64), (0.5, 8), (0.7, 9)] {
        let paths = simulate(hurst, 51, 20_000, seed);
        let mut products = Vec::new();
        for p in &paths {
            let incs: Vec<f64> = p.windows(2).map(|w| w[1] - w[0]).collect();
            products.extend(incs.windows(2).map(|w| w[0] * w[1]));
        }
        let empirical = mean(&products) / (SIGMA * SIGMA);
        let theory = 0.5 * (2f64.powf(2.0 * hurst) - 2.0);
        assert!(
            (empirical - theory).abs() < 0.01,
            "H={hurst}: lag-1 autocovariance {empirical}, expected {theory}"
        );
        if hurst < 0.5 {
            assert!(empirical < -0.05, "H={hurst} must anti-correlate");
        }
        if hurst > 0.5 {
            assert!(empirical > 0.05, "H={hurst} must correlate");
        }
    }
}
