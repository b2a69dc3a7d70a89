//! Two-sample comparison of drawdown distributions.

use serde::{Deserialize, Serialize};

use crate::drawdown::TargetKind;
use crate::error::{Error, Result};
use crate::float::{sort_floats, Float};
use crate::paths::{generate_fbm_paths, FbmConfig};

/// Kolmogorov-Smirnov statistic `sup_x |F_a(x) - F_b(x)|` between the
/// empirical distributions of two samples.
pub fn ks_statistic<T: Float>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("ks statistic needs two nonempty samples"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    sort_floats(&mut xs);
    sort_floats(&mut ys);
    let (na, nb) = (T::cast(xs.len()), T::cast(ys.len()));
    let mut i = 0;
    let mut j = 0;
    let mut sup = T::zero();
    while i < xs.len() || j < ys.len() {
        // next evaluation point; advance both samples past ties together so
        // the step heights land before comparing
        let x = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        let fa = T::cast(i) / na;
        let fb = T::cast(j) / nb;
        sup = sup.max((fa - fb).abs());
    }
    Ok(sup)
}

/// Linear-interpolation quantile of a sample (the convention where the
/// order statistics sit at probabilities `i / (n - 1)`). The input need not
/// be sorted.
pub fn quantile<T: Float>(sample: &[T], q: T) -> Result<T> {
    if sample.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(q >= T::zero() && q <= T::one()) {
        return Err(Error::invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let mut xs = sample.to_vec();
    sort_floats(&mut xs);
    let n = xs.len();
    if n == 1 {
        return Ok(xs[0]);
    }
    let pos = q * T::cast(n - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = pos - T::cast(lo);
    Ok(xs[lo] + frac * (xs[hi] - xs[lo]))
}

/// Matched quantiles of two samples at one probability level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint<T> {
    pub q: T,
    pub a: T,
    pub b: T,
}

/// Quantile-quantile points of two samples at the given levels.
pub fn qq_points<T: Float>(a: &[T], b: &[T], levels: &[T]) -> Result<Vec<QqPoint<T>>> {
    levels
        .iter()
        .map(|&q| Ok(QqPoint { q, a: quantile(a, q)?, b: quantile(b, q)? }))
        .collect()
}

/// Probability levels reported as "tails" in the comparisons.
pub const TAIL_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// Summary comparison of two samples: KS distance, an evenly spaced QQ
/// curve, and the upper-tail quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistComparison<T> {
    pub ks: T,
    pub qq: Vec<QqPoint<T>>,
    pub tails: Vec<QqPoint<T>>,
}

/// Builds a [`DistComparison`] with `n_qq` interior QQ levels
/// `i / (n_qq + 1)`.
pub fn compare_distributions<T: Float>(
    a: &[T],
    b: &[T],
    n_qq: usize,
) -> Result<DistComparison<T>> {
    if n_qq == 0 {
        return Err(Error::invalid("need at least one qq level"));
    }
    let ks = ks_statistic(a, b)?;
    let levels: Vec<T> = (1..=n_qq)
        .map(|i| T::cast(i) / T::cast(n_qq + 1))
        .collect();
    let qq = qq_points(a, b, &levels)?;
    let tail_levels: Vec<T> = TAIL_LEVELS.iter().map(|&q| T::cast(q)).collect();
    let tails = qq_points(a, b, &tail_levels)?;
    Ok(DistComparison { ks, qq, tails })
}

/// Drawdown sample of `k` driftless Brownian paths with the given per-step
/// volatility: the optimistic baseline a generator has to beat.
pub fn bm_baseline<T: Float>(
    sigma: T,
    n: usize,
    k: usize,
    seed: u64,
    target: TargetKind,
) -> Result<Vec<T>> {
    let paths = generate_fbm_paths(&FbmConfig {
        hurst: T::cast(0.5),
        n,
        k,
        mu: T::zero(),
        sigma,
        seed,
    })?;
    Ok(crate::approximator::block_targets(&paths, target))
}
