//! Discrete price paths and fractional Brownian motion simulation.
//!
//! Paths are uniformly sampled value series. Fractional Gaussian noise is
//! drawn exactly, by Cholesky-factorizing the autocovariance matrix; that
//! bounds the series length (`MAX_FGN_LEN`) but is exact for the short
//! windows this crate works with.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::seed::derive_seed;

/// Longest fractional Gaussian noise series the exact (Cholesky) sampler
/// accepts. Quadratic memory in the length makes larger requests a mistake
/// rather than a workload.
pub const MAX_FGN_LEN: usize = 1024;

/// A uniformly sampled value series: `values[i]` is the level at time
/// `i * dt`. Always has at least two points, finite values, and `dt > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPath<T> {
    pub values: Vec<T>,
    pub dt: T,
}

impl<T: Float> SeriesPath<T> {
    pub fn new(values: Vec<T>, dt: T) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "a path needs at least 2 points, got {}",
                values.len()
            )));
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive and finite, got {dt}")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite path value {v}")));
        }
        Ok(SeriesPath { values, dt })
    }

    /// Number of sample points.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A path augmented with an explicit, strictly increasing time coordinate;
/// `points[i] = (t_i, x_i)`. Produced by [`time_augment`], which maps the
/// time grid onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPath<T> {
    pub points: Vec<(T, T)>,
}

impl<T: Float> AugmentedPath<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Configuration for a batch of fractional Brownian motion paths.
///
/// Each of the `k` paths has `n` points, starts at level 1, and evolves by
/// `mu + sigma * g_t` per step, where `g` is fractional Gaussian noise with
/// Hurst index `hurst`. `mu` and `sigma` are per-step quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmConfig<T> {
    pub hurst: T,
    /// Points per path (so `n - 1` noise increments).
    pub n: usize,
    /// Number of paths.
    pub k: usize,
    pub mu: T,
    pub sigma: T,
    pub seed: u64,
}

impl<T: Float> FbmConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.hurst > T::zero() && self.hurst < T::one()) {
            return Err(Error::invalid(format!(
                "Hurst index must lie in (0, 1), got {}",
                self.hurst
            )));
        }
        if self.n < 2 {
            return Err(Error::invalid(format!("paths need n >= 2 points, got {}", self.n)));
        }
        if self.k == 0 {
            return Err(Error::invalid("path count k must be positive"));
        }
        if !self.mu.is_finite() {
            return Err(Error::invalid("mu must be finite"));
        }
        if !(self.sigma >= T::zero()) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Autocovariance of fractional Gaussian noise at integer lag `k`:
/// `(|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2`. Lag 0 gives 1; for
/// `H = 1/2` all positive lags vanish (white noise).
pub fn fgn_autocovariance<T: Float>(hurst: T, lag: usize) -> T {
    let two_h = T::cast(2.0) * hurst;
    let k = T::cast(lag);
    let term = |x: T| x.abs().powf(two_h);
    (term(k + T::one()) - T::cast(2.0) * term(k) + term(k - T::one())) / T::cast(2.0)
}

/// Lower-triangular Cholesky factor of the fGn autocovariance matrix of
/// size `n`, stored row-major with rows of increasing length.
fn fgn_cholesky<T: Float>(hurst: T, n: usize) -> Result<Vec<Vec<T>>> {
    let cov: Vec<T> = (0..n).map(|lag| fgn_autocovariance(hurst, lag)).collect();
    let mut l: Vec<Vec<T>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![T::zero(); i + 1];
        for j in 0..=i {
            let lj: &[T] = if j == i { &row } else { &l[j] };
            let mut s = cov[i - j];
            for t in 0..j {
                s = s - row[t] * lj[t];
            }
            if j == i {
                if !(s > T::zero()) {
                    return Err(Error::numeric(format!(
                        "fGn covariance lost positive definiteness at index {i} (H = {hurst})"
                    )));
                }
                row[j] = s.sqrt();
            } else {
                row[j] = s / l[j][j];
            }
        }
        l.push(row);
    }
    Ok(l)
}

fn standard_normals<T: Float, R: Rng>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| T::cast(rng.sample::<f64, _>(StandardNormal))).collect()
}

fn fgn_from_factor<T: Float, R: Rng>(l: &[Vec<T>], rng: &mut R) -> Vec<T> {
    let eps: Vec<T> = standard_normals(rng, l.len());
    l.iter()
        .map(|row| row.iter().zip(&eps).fold(T::zero(), |s, (&a, &e)| s + a * e))
        .collect()
}

/// Draws one fractional Gaussian noise series of length `n` (unit variance
/// per step), exactly, from the seeded generator. `n` is capped at
/// [`MAX_FGN_LEN`] because the exact sampler is quadratic in `n`.
pub fn generate_fgn<T: Float>(hurst: T, n: usize, seed: u64) -> Result<Vec<T>> {
    if !(hurst > T::zero() && hurst < T::one()) {
        return Err(Error::invalid(format!("Hurst index must lie in (0, 1), got {hurst}")));
    }
    if n == 0 {
        return Err(Error::invalid("fGn length must be positive"));
    }
    if n > MAX_FGN_LEN {
        return Err(Error::invalid(format!(
            "fGn length {n} exceeds the exact sampler's limit {MAX_FGN_LEN}"
        )));
    }
    let l = fgn_cholesky(hurst, n)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(fgn_from_factor(&l, &mut rng))
}

/// Simulates `cfg.k` fractional Brownian motion paths. Each path draws from
/// its own ChaCha stream derived from `(cfg.seed, path index)`, so the batch
/// is reproducible independently of iteration or thread order.
pub fn generate_fbm_paths<T: Float>(cfg: &FbmConfig<T>) -> Result<Vec<SeriesPath<T>>> {
    cfg.validate()?;
    let steps = cfg.n - 1;
    if steps > MAX_FGN_LEN {
        return Err(Error::invalid(format!(
            "path length {} exceeds the exact sampler's limit {}",
            cfg.n,
            MAX_FGN_LEN + 1
        )));
    }
    let factor = if cfg.sigma > T::zero() { Some(fgn_cholesky(cfg.hurst, steps)?) } else { None };
    (0..cfg.k)
        .into_par_iter()
        .map(|i| {
            let mut values = Vec::with_capacity(cfg.n);
            values.push(T::one());
            match &factor {
                Some(l) => {
                    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(i as u64);
                    let g = fgn_from_factor(l, &mut rng);
                    for t in 0..steps {
                        let next = values[t] + cfg.mu + cfg.sigma * g[t];
                        values.push(next);
                    }
                }
                None => {
                    for t in 0..steps {
                        let next = values[t] + cfg.mu;
                        values.push(next);
                    }
                }
            }
            SeriesPath::new(values, T::one())
        })
        .collect()
}

/// Attaches a time coordinate normalized to `[0, 1]`: point `i` of an
/// `n`-point path sits at `t = i / (n - 1)`. The value coordinate is
/// unchanged.
pub fn time_augment<T: Float>(path: &SeriesPath<T>) -> AugmentedPath<T> {
    let n = path.len();
    let denom = T::cast(n - 1);
    let points = path
        .values
        .iter()
        .enumerate()
        .map(|(i, &x)| (T::cast(i) / denom, x))
        .collect();
    AugmentedPath { points }
}

/// Cuts a series of length `T` into `T - tau` overlapping blocks of `tau`
/// points; block `b` covers `values[b .. b + tau]`. With `rebase`, every
/// block is divided by its first value so it starts at level 1 (requires a
/// strictly positive block start).
pub fn make_blocks<T: Float>(
    series: &SeriesPath<T>,
    tau: usize,
    rebase: bool,
) -> Result<Vec<SeriesPath<T>>> {
    if tau < 2 {
        return Err(Error::invalid(format!("block length tau must be >= 2, got {tau}")));
    }
    if series.len() <= tau {
        return Err(Error::invalid(format!(
            "series of length {} is too short for blocks of length {tau}",
            series.len()
        )));
    }
    let count = series.len() - tau;
    let mut blocks = Vec::with_capacity(count);
    for b in 0..count {
        let window = &series.values[b..b + tau];
        let values = if rebase {
            let first = window[0];
            if !(first > T::zero()) {
                return Err(Error::invalid(format!(
                    "cannot rebase block {b}: start value {first} is not positive"
                )));
            }
            window.iter().map(|&v| v / first).collect()
        } else {
            window.to_vec()
        };
        blocks.push(SeriesPath::new(values, series.dt)?);
    }
    Ok(blocks)
}

/// Uniform distance `max_i |a_i - b_i|` between two equally long paths.
pub fn inf_distance<T: Float>(a: &SeriesPath<T>, b: &SeriesPath<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "path length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs())))
}

/// Derives the seed for one simulation cell of a larger experiment.
pub fn cell_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(base, |s, &t| derive_seed(s, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn autocovariance_hand_values() {
        // (2^{1.4} - 2) / 2 for H = 0.7 at lag 1
        assert_abs_diff_eq!(fgn_autocovariance(0.7_f64, 1), 0.319508, epsilon = 1e-6);
        assert_abs_diff_eq!(fgn_autocovariance(0.7_f64, 0), 1.0, epsilon = 1e-15);
        // H = 1/2 is white noise
        for lag in 1..10 {
            assert_abs_diff_eq!(fgn_autocovariance(0.5_f64, lag), 0.0, epsilon = 1e-12);
        }
        // anti-persistent case has negative lag-1 autocovariance
        assert!(fgn_autocovariance(0.3_f64, 1) < 0.0);
    }

    #[test]
    fn fgn_is_reproducible_and_seed_sensitive() {
        let a = generate_fgn(0.7_f64, 32, 11).unwrap();
        let b = generate_fgn(0.7_f64, 32, 11).unwrap();
        let c = generate_fgn(0.7_f64, 32, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 32);
    }

    #[test]
    fn fgn_rejects_bad_arguments() {
        assert!(generate_fgn(0.0_f64, 8, 1).is_err());
        assert!(generate_fgn(1.0_f64, 8, 1).is_err());
        assert!(generate_fgn(0.5_f64, 0, 1).is_err());
        assert!(generate_fgn(0.5_f64, MAX_FGN_LEN + 1, 1).is_err());
    }

    #[test]
    fn zero_vol_paths_are_the_drift_line() {
        let cfg = FbmConfig { hurst: 0.5_f64, n: 6, k: 3, mu: 0.25, sigma: 0.0, seed: 5 };
        let paths = generate_fbm_paths(&cfg).unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            assert_eq!(p.len(), 6);
            for (i, &v) in p.values.iter().enumerate() {
                assert_abs_diff_eq!(v, 1.0 + 0.25 * i as f64, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fbm_batch_is_reproducible_with_distinct_paths() {
        let cfg = FbmConfig { hurst: 0.7_f64, n: 20, k: 4, mu: 0.0, sigma: 1.0, seed: 9 };
        let a = generate_fbm_paths(&cfg).unwrap();
        let b = generate_fbm_paths(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.values[0] == 1.0));
        assert_ne!(a[0].values, a[1].values);
    }

    #[test]
    fn time_augment_normalizes_to_unit_interval() {
        let p = SeriesPath::new(vec![5.0, 6.0, 4.0], 3.0).unwrap();
        let a = time_augment(&p);
        assert_eq!(a.points[0], (0.0, 5.0));
        assert_eq!(a.points[1], (0.5, 6.0));
        assert_eq!(a.points[2], (1.0, 4.0));
    }

    #[test]
    fn blocks_slide_one_step_at_a_time() {
        let s = SeriesPath::new(vec![1.0, 2.0, 3.0, 4.0], 1.0).unwrap();
        let blocks = make_blocks(&s, 2, false).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].values, vec![1.0, 2.0]);
        assert_eq!(blocks[1].values, vec![2.0, 3.0]);

        let rebased = make_blocks(&s, 2, true).unwrap();
        assert_eq!(rebased[0].values, vec![1.0, 2.0]);
        assert_eq!(rebased[1].values, vec![1.0, 1.5]);
    }

    #[test]
    fn block_count_matches_long_series() {
        let s = SeriesPath::new(vec![1.0_f64; 8449], 1.0).unwrap();
        assert_eq!(make_blocks(&s, 20, false).unwrap().len(), 8429);
    }

    #[test]
    fn blocks_reject_degenerate_requests() {
        let s = SeriesPath::new(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        assert!(make_blocks(&s, 1, false).is_err());
        assert!(make_blocks(&s, 3, false).is_err());
        let neg = SeriesPath::new(vec![-1.0, 2.0, 3.0, 4.0], 1.0).unwrap();
        assert!(make_blocks(&neg, 2, true).is_err());
    }

    #[test]
    fn inf_distance_hand_value() {
        let a = SeriesPath::new(vec![1.0, 2.0, 3.0], 1.0).unwrap();
        let b = SeriesPath::new(vec![1.5, 2.0, 1.0], 1.0).unwrap();
        assert_eq!(inf_distance(&a, &b).unwrap(), 2.0);
        let c = SeriesPath::new(vec![1.0, 2.0], 1.0).unwrap();
        assert!(inf_distance(&a, &c).is_err());
    }

    #[test]
    fn series_path_validates() {
        assert!(SeriesPath::new(vec![1.0], 1.0).is_err());
        assert!(SeriesPath::new(vec![1.0, f64::NAN], 1.0).is_err());
        assert!(SeriesPath::new(vec![1.0, 2.0], 0.0).is_err());
    }
}
