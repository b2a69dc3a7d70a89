//! Linear drawdown approximation on signature features, and the simulation
//! study that quantifies how good that approximation is.
//!
//! A [`DrawdownModel`] is an elastic-net readout of the standardized
//! truncated-signature features of a time-augmented window. Because the
//! feature map is an explicit polynomial in the path values, the model is
//! differentiable: [`approximate_drawdown_gradient`] returns the exact
//! derivative of the predicted drawdown with respect to every path value,
//! which is what lets the generator train against it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;

use crate::drawdown::{drawdown_target, TargetKind};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::paths::{cell_seed, generate_fbm_paths, time_augment, FbmConfig, SeriesPath};
use crate::regression::{
    apply_scaler, cross_validate, fit_elastic_net, fit_scaler, rmse, CvConfig, ElasticNetModel,
    FeatureMatrix, Scaler,
};
use crate::seed::derive_seed;
use crate::signature::{num_terms, path_signature, signature_jacobian};

/// Truncation levels above this are almost certainly a configuration
/// mistake: the feature count grows as `2^level`.
pub const MAX_LEVEL: usize = 12;

/// A fitted drawdown approximator: standardization plus a linear readout of
/// the signature features of a window of `tau` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawdownModel<T> {
    pub scaler: Scaler<T>,
    pub net: ElasticNetModel<T>,
    /// Alphabet size of the augmented path (time and value).
    pub d: usize,
    /// Signature truncation level.
    pub level: usize,
    /// Window length the model was fitted on.
    pub tau: usize,
    pub target: TargetKind,
}

fn check_level(level: usize) -> Result<()> {
    if level < 1 || level > MAX_LEVEL {
        return Err(Error::invalid(format!(
            "signature level {level} outside 1..={MAX_LEVEL}"
        )));
    }
    Ok(())
}

fn uniform_block_len<T: Float>(blocks: &[SeriesPath<T>]) -> Result<usize> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::invalid("no blocks provided"))?
        .len();
    if let Some(bad) = blocks.iter().find(|b| b.len() != first) {
        return Err(Error::invalid(format!(
            "mixed block lengths: {} and {}",
            first,
            bad.len()
        )));
    }
    Ok(first)
}

/// Signature features of each block (rows) at the given truncation level.
pub fn block_features<T: Float>(
    blocks: &[SeriesPath<T>],
    level: usize,
) -> Result<FeatureMatrix<T>> {
    check_level(level)?;
    uniform_block_len(blocks)?;
    let rows: Vec<Vec<T>> = blocks
        .par_iter()
        .map(|b| {
            let sig = path_signature(&time_augment(b), level)?;
            Ok(sig.features().to_vec())
        })
        .collect::<Result<_>>()?;
    FeatureMatrix::from_rows(&rows)
}

/// Drawdown target of each block.
pub fn block_targets<T: Float>(blocks: &[SeriesPath<T>], target: TargetKind) -> Vec<T> {
    blocks.iter().map(|b| drawdown_target(b, target)).collect()
}

/// Standardizes features, cross-validates the penalties, and fits the final
/// readout on everything passed in. Used on raw feature matrices by the
/// study code; [`fit_drawdown_approximator`] is the block-level entry.
pub(crate) fn fit_readout<T: Float>(
    features: &FeatureMatrix<T>,
    targets: &[T],
    cv: &CvConfig<T>,
    temporal: bool,
    seed: u64,
) -> Result<(Scaler<T>, ElasticNetModel<T>)> {
    let scaler = fit_scaler(features)?;
    let scaled = apply_scaler(&scaler, features)?;
    let report = cross_validate(&scaled, targets, cv, temporal, seed)?;
    let (l1, l2) = report.best;
    let fit = fit_elastic_net(&scaled, targets, l1, l2, &cv.fit)?;
    Ok((scaler, fit.model))
}

/// Fits a drawdown approximator on equally long blocks. `temporal` selects
/// contiguous cross-validation folds, the right choice when blocks come
/// from overlapping windows of one series.
pub fn fit_drawdown_approximator<T: Float>(
    blocks: &[SeriesPath<T>],
    level: usize,
    target: TargetKind,
    cv: &CvConfig<T>,
    temporal: bool,
    seed: u64,
) -> Result<DrawdownModel<T>> {
    check_level(level)?;
    let tau = uniform_block_len(blocks)?;
    if blocks.len() < cv.folds {
        return Err(Error::invalid(format!(
            "{} blocks cannot be cross-validated with {} folds",
            blocks.len(),
            cv.folds
        )));
    }
    let features = block_features(blocks, level)?;
    let targets = block_targets(blocks, target);
    let (scaler, net) = fit_readout(&features, &targets, cv, temporal, seed)?;
    Ok(DrawdownModel { scaler, net, d: 2, level, tau, target })
}

/// Predicted drawdown of one window.
pub fn approximate_drawdown<T: Float>(model: &DrawdownModel<T>, path: &SeriesPath<T>) -> Result<T> {
    if path.len() != model.tau {
        return Err(Error::invalid(format!(
            "path has {} points but the model was fitted on windows of {}",
            path.len(),
            model.tau
        )));
    }
    let sig = path_signature(&time_augment(path), model.level)?;
    let row = model.scaler.transform_row(sig.features())?;
    Ok(model.net.predict_row(&row))
}

/// Exact gradient of [`approximate_drawdown`] with respect to the path
/// values: the readout weights (rescaled by the feature standard
/// deviations) contracted with the signature Jacobian.
pub fn approximate_drawdown_gradient<T: Float>(
    model: &DrawdownModel<T>,
    path: &SeriesPath<T>,
) -> Result<Vec<T>> {
    if path.len() != model.tau {
        return Err(Error::invalid(format!(
            "path has {} points but the model was fitted on windows of {}",
            path.len(),
            model.tau
        )));
    }
    let jac = signature_jacobian(&time_augment(path), model.level)?;
    let mut grad = vec![T::zero(); path.len()];
    for (f, row) in jac.iter().enumerate() {
        let w = model.net.weights[f] / model.scaler.stds[f];
        if w != T::zero() {
            for (g, &j) in grad.iter_mut().zip(row) {
                *g = *g + w * j;
            }
        }
    }
    Ok(grad)
}

/// Which side of a train/test split a study row reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Grid study configuration: every combination of Hurst index, truncation
/// level and training-set size is one cell. `mu` is the per-step drift;
/// `sigma` is the per-step volatility of the Brownian (H = 0.5) benchmark,
/// and each cell rescales it so that every Hurst index yields the same
/// variance over the full window — comparisons across roughness then
/// measure approximation difficulty, not path scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig<T> {
    pub hursts: Vec<T>,
    pub levels: Vec<usize>,
    pub ks: Vec<usize>,
    /// Points per simulated path.
    pub tau: usize,
    /// Test fraction: `ceil(p_test * k)` extra paths per cell.
    pub p_test: T,
    pub mu: T,
    pub sigma: T,
    pub target: TargetKind,
    pub cv: CvConfig<T>,
    pub seed: u64,
}

impl<T: Float> Default for StudyConfig<T> {
    /// Desk-scale grid around the base case of 1% annual drift and 20%
    /// annual volatility spread over 252 steps, on 20-point windows.
    fn default() -> Self {
        StudyConfig {
            hursts: vec![T::cast(0.4), T::cast(0.55), T::cast(0.7)],
            levels: (1..=6).collect(),
            ks: vec![1000, 5000, 20000],
            tau: 20,
            p_test: T::cast(0.1),
            mu: T::cast(0.01 / 252.0),
            sigma: T::cast(0.20 / 252.0),
            target: TargetKind::Integrated,
            cv: CvConfig::default(),
            seed: 42,
        }
    }
}

/// One row of the study output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow<T> {
    pub hurst: T,
    pub level: usize,
    pub k: usize,
    pub split: Split,
    pub rmse: T,
}

/// Long-form study results, sorted by (hurst, level, k, split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport<T> {
    pub rows: Vec<StudyRow<T>>,
}

impl<T: Float> ExperimentReport<T> {
    /// Looks up one cell; `hurst` must be the exact configured value.
    pub fn rmse(&self, hurst: T, level: usize, k: usize, split: Split) -> Option<T> {
        self.rows
            .iter()
            .find(|r| r.hurst == hurst && r.level == level && r.k == k && r.split == split)
            .map(|r| r.rmse)
    }

    /// Mean of `|train - test|` RMSE over all levels at one (hurst, k).
    pub fn mean_gap(&self, hurst: T, k: usize) -> Option<T> {
        let mut gaps = Vec::new();
        let levels: Vec<usize> = self
            .rows
            .iter()
            .filter(|r| r.hurst == hurst && r.k == k && r.split == Split::Train)
            .map(|r| r.level)
            .collect();
        for level in levels {
            let train = self.rmse(hurst, level, k, Split::Train)?;
            let test = self.rmse(hurst, level, k, Split::Test)?;
            gaps.push((train - test).abs());
        }
        if gaps.is_empty() {
            return None;
        }
        Some(gaps.iter().fold(T::zero(), |s, &g| s + g) / T::cast(gaps.len()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "hurst,level,k,split,rmse")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.hurst, r.level, r.k, r.split, r.rmse)?;
        }
        Ok(())
    }
}

/// Runs the full (hurst, level, k) grid. Each (hurst, k) cell simulates its
/// own train and test paths from a seed derived from the cell's position,
/// computes signature features once at the highest requested level, and
/// reuses their prefixes for the lower levels. Cells are independent and
/// run in parallel; the report does not depend on scheduling.
pub fn run_fbm_study<T: Float>(cfg: &StudyConfig<T>) -> Result<ExperimentReport<T>> {
    if cfg.hursts.is_empty() || cfg.levels.is_empty() || cfg.ks.is_empty() {
        return Err(Error::invalid("study grids must be nonempty"));
    }
    let max_level = *cfg.levels.iter().max().unwrap();
    check_level(max_level)?;
    if !(cfg.p_test > T::zero() && cfg.p_test <= T::one()) {
        return Err(Error::invalid(format!("p_test must lie in (0, 1], got {}", cfg.p_test)));
    }

    let cells: Vec<(usize, usize)> = (0..cfg.hursts.len())
        .flat_map(|h| (0..cfg.ks.len()).map(move |k| (h, k)))
        .collect();

    let nested: Vec<Vec<StudyRow<T>>> = cells
        .par_iter()
        .map(|&(hi, ki)| -> Result<Vec<StudyRow<T>>> {
            let hurst = cfg.hursts[hi];
            let k = cfg.ks[ki];
            let n_test = (cfg.p_test * T::cast(k)).ceil().to_usize().unwrap_or(0).max(1);
            let seed = cell_seed(cfg.seed, &[hi as u64, ki as u64]);
            // Match every Hurst index to the same full-window variance as the
            // Brownian benchmark: self-similarity turns a per-step volatility
            // of sigma * T^(1/2 - H) into Var(S_T - S_0) = sigma^2 * T for
            // all H, so cells differ in roughness, not in overall scale.
            let horizon = T::cast(cfg.tau.saturating_sub(1).max(1));
            let step_sigma = cfg.sigma * horizon.powf(T::cast(0.5) - hurst);
            let paths = generate_fbm_paths(&FbmConfig {
                hurst,
                n: cfg.tau,
                k: k + n_test,
                mu: cfg.mu,
                sigma: step_sigma,
                seed,
            })?;
            let (train_paths, test_paths) = paths.split_at(k);

            let train_feats = block_features(train_paths, max_level)?;
            let test_feats = block_features(test_paths, max_level)?;
            let train_targets = block_targets(train_paths, cfg.target);
            let test_targets = block_targets(test_paths, cfg.target);

            let mut rows = Vec::with_capacity(cfg.levels.len() * 2);
            for &level in &cfg.levels {
                let width = num_terms(2, level);
                let x_train = train_feats.prefix_columns(width)?;
                let x_test = test_feats.prefix_columns(width)?;
                let (scaler, net) = fit_readout(
                    &x_train,
                    &train_targets,
                    &cfg.cv,
                    false,
                    derive_seed(seed, level as u64),
                )?;
                let z_train = apply_scaler(&scaler, &x_train)?;
                let z_test = apply_scaler(&scaler, &x_test)?;
                let rmse_train = rmse(&net.predict(&z_train)?, &train_targets)?;
                let rmse_test = rmse(&net.predict(&z_test)?, &test_targets)?;
                rows.push(StudyRow { hurst, level, k, split: Split::Train, rmse: rmse_train });
                rows.push(StudyRow { hurst, level, k, split: Split::Test, rmse: rmse_test });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<StudyRow<T>> = nested.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.hurst
            .partial_cmp(&b.hurst)
            .expect("finite hurst")
            .then(a.level.cmp(&b.level))
            .then(a.k.cmp(&b.k))
            .then(a.split.cmp(&b.split))
    });
    Ok(ExperimentReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_blocks(k: usize, tau: usize, seed: u64) -> Vec<SeriesPath<f64>> {
        generate_fbm_paths(&FbmConfig {
            hurst: 0.5,
            n: tau,
            k,
            mu: 0.0,
            sigma: 0.02,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn readout_recovers_a_linear_functional_of_the_features() {
        let blocks = small_blocks(80, 8, 1);
        let test_blocks = small_blocks(30, 8, 2);
        let feats = block_features(&blocks, 3).unwrap();
        let test_feats = block_features(&test_blocks, 3).unwrap();

        let width = feats.n_cols();
        let w_true: Vec<f64> = (0..width).map(|j| ((j % 5) as f64 - 2.0) * 0.3).collect();
        let synth = |m: &FeatureMatrix<f64>| -> Vec<f64> {
            (0..m.n_rows())
                .map(|i| 0.05 + m.row(i).iter().zip(&w_true).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        };
        let y = synth(&feats);
        let y_test = synth(&test_feats);

        let cv = CvConfig { folds: 4, ..CvConfig::default() };
        let (scaler, net) = fit_readout(&feats, &y, &cv, false, 7).unwrap();
        let z_test = apply_scaler(&scaler, &test_feats).unwrap();
        let err = rmse(&net.predict(&z_test).unwrap(), &y_test).unwrap();
        assert!(err < 1e-6, "test rmse {err} on a noiseless linear target");
    }

    #[test]
    fn fitted_model_predicts_and_checks_shapes() {
        let blocks = small_blocks(60, 10, 3);
        let cv = CvConfig { folds: 4, ..CvConfig::default() };
        let model =
            fit_drawdown_approximator(&blocks, 3, TargetKind::Maximum, &cv, false, 5).unwrap();
        assert_eq!(model.tau, 10);
        assert_eq!(model.net.weights.len(), num_terms(2, 3));
        let pred = approximate_drawdown(&model, &blocks[0]).unwrap();
        assert!(pred.is_finite());

        let short = small_blocks(1, 5, 4).pop().unwrap();
        assert!(approximate_drawdown(&model, &short).is_err());
    }

    #[test]
    fn prediction_gradient_matches_finite_differences() {
        let blocks = small_blocks(60, 6, 9);
        let cv = CvConfig { folds: 4, ..CvConfig::default() };
        let model =
            fit_drawdown_approximator(&blocks, 3, TargetKind::Integrated, &cv, false, 11).unwrap();
        let path = &blocks[7];
        let grad = approximate_drawdown_gradient(&model, path).unwrap();
        let h = 1e-6;
        for j in 0..path.len() {
            let mut up = path.clone();
            let mut down = path.clone();
            up.values[j] += h;
            down.values[j] -= h;
            let fd = (approximate_drawdown(&model, &up).unwrap()
                - approximate_drawdown(&model, &down).unwrap())
                / (2.0 * h);
            let denom = grad[j].abs().max(fd.abs()).max(1.0);
            assert!(
                (grad[j] - fd).abs() / denom < 1e-5,
                "coordinate {j}: analytic {} vs fd {fd}",
                grad[j]
            );
        }
    }

    #[test]
    fn model_serializes_with_bit_equal_predictions() {
        let blocks = small_blocks(50, 8, 13);
        let cv = CvConfig { folds: 4, ..CvConfig::default() };
        let model =
            fit_drawdown_approximator(&blocks, 2, TargetKind::Terminal, &cv, false, 3).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: DrawdownModel<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        for b in blocks.iter().take(5) {
            let a = approximate_drawdown(&model, b).unwrap();
            let c = approximate_drawdown(&back, b).unwrap();
            assert_eq!(a.to_bits(), c.to_bits());
        }
    }

    #[test]
    fn study_smoke_is_deterministic_and_well_formed() {
        let cfg = StudyConfig {
            hursts: vec![0.5],
            levels: vec![1, 2],
            ks: vec![40],
            tau: 8,
            p_test: 0.25,
            cv: CvConfig { folds: 4, ..CvConfig::default() },
            seed: 77,
            ..StudyConfig::<f64>::default()
        };
        let a = run_fbm_study(&cfg).unwrap();
        let b = run_fbm_study(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        assert!(a.rows.iter().all(|r| r.rmse.is_finite() && r.rmse >= 0.0));
        assert!(a.rmse(0.5, 1, 40, Split::Train).is_some());
        assert!(a.mean_gap(0.5, 40).is_some());

        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("hurst,level,k,split,rmse\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn study_rejects_bad_grids() {
        let mut cfg = StudyConfig::<f64>::default();
        cfg.hursts.clear();
        assert!(run_fbm_study(&cfg).is_err());
        let mut cfg = StudyConfig::<f64>::default();
        cfg.p_test = 0.0;
        assert!(run_fbm_study(&cfg).is_err());
        let mut cfg = StudyConfig::<f64>::default();
        cfg.levels = vec![MAX_LEVEL + 1];
        assert!(run_fbm_study(&cfg).is_err());
    }
}
