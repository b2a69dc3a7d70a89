//! Drawdown-aware variational autoencoder over fixed-length path blocks.
//!
//! The generator is a small fully connected VAE whose reconstruction loss
//! carries an extra penalty: the squared difference between the predicted
//! drawdown of the input block and of its reconstruction, measured by a
//! fitted, differentiable [`DrawdownModel`]. Because that predictor is
//! linear in signature features, its gradient with respect to the decoded
//! path is exact, and the penalty steers the decoder toward paths whose
//! drawdown behavior matches the data.
//!
//! All randomness is funneled through explicit seeds and a fixed draw
//! order, so training and sampling are reproducible bit for bit.

mod grad;
mod train;

pub use grad::{batch_gradients, batch_loss, StepNoise};
pub use train::{train, TrainOutcome};

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::approximator::{approximate_drawdown, DrawdownModel, Split};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::paths::SeriesPath;

/// A dense affine layer, `y = W x + b`, with `w` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Float> Dense<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense { rows, cols, w: vec![T::zero(); rows * cols], b: vec![T::zero(); rows] }
    }

    /// Glorot-uniform weights, zero bias.
    fn glorot(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let w = (0..rows * cols)
            .map(|_| T::cast(rng.random_range(-limit..limit)))
            .collect();
        Dense { rows, cols, w, b: vec![T::zero(); rows] }
    }

    fn scaled_by(mut self, factor: T) -> Self {
        for w in self.w.iter_mut() {
            *w = *w * factor;
        }
        self
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = self.b.clone();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut s = T::zero();
            for (wi, xi) in row.iter().zip(x) {
                s = s + *wi * *xi;
            }
            y[r] = y[r] + s;
        }
        y
    }

    /// `Wᵀ g` — pulls an output-side gradient back to the input side.
    fn apply_transposed(&self, g: &[T]) -> Vec<T> {
        debug_assert_eq!(g.len(), self.rows);
        let mut y = vec![T::zero(); self.cols];
        for (r, gr) in g.iter().enumerate() {
            if *gr == T::zero() {
                continue;
            }
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            for (yi, wi) in y.iter_mut().zip(row) {
                *yi = *yi + *gr * *wi;
            }
        }
        y
    }

    /// Accumulates the gradient of `y = W x + b` given `dL/dy`:
    /// `dW += g ⊗ x`, `db += g`.
    fn add_outer(&mut self, g: &[T], x: &[T]) {
        for (r, gr) in g.iter().enumerate() {
            self.b[r] = self.b[r] + *gr;
            if *gr == T::zero() {
                continue;
            }
            let row = &mut self.w[r * self.cols..(r + 1) * self.cols];
            for (wi, xi) in row.iter_mut().zip(x) {
                *wi = *wi + *gr * *xi;
            }
        }
    }
}

/// All parameters of the autoencoder. The same shape doubles as the
/// gradient and optimizer-moment container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeParams<T> {
    /// Typical deviation of a training block from the origin level. Encoder
    /// inputs are divided by it and decoder outputs multiplied by it, so the
    /// trainable tensors always operate on roughly unit-variance quantities
    /// regardless of how volatile the data is. Fixed at fit time, not
    /// trained.
    pub scale: T,
    /// Input to encoder hidden layer.
    pub enc: Dense<T>,
    /// Hidden to latent mean.
    pub mu: Dense<T>,
    /// Hidden to latent log-variance.
    pub logvar: Dense<T>,
    /// Latent to decoder hidden layer.
    pub dec_hidden: Dense<T>,
    /// Decoder hidden to reconstructed block.
    pub dec_out: Dense<T>,
}

impl<T: Float> VaeParams<T> {
    /// Seeded Glorot initialization; identical seeds give identical
    /// parameters.
    /// Glorot-uniform layers, except that the two posterior heads start at a
    /// tenth of that size. The encoded posterior then begins close to the
    /// prior, keeping the divergence term from dwarfing the reconstruction
    /// terms in the first steps; the heads grow back out only where encoding
    /// the input actually pays off in reconstruction.
    pub fn init(input: usize, hidden: usize, latent: usize, seed: u64) -> Self {
        let head = T::cast(0.1);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        VaeParams {
            scale: T::one(),
            enc: Dense::glorot(hidden, input, &mut rng),
            mu: Dense::glorot(latent, hidden, &mut rng).scaled_by(head),
            logvar: Dense::glorot(latent, hidden, &mut rng).scaled_by(head),
            dec_hidden: Dense::glorot(hidden, latent, &mut rng),
            dec_out: Dense::glorot(input, hidden, &mut rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        VaeParams {
            scale: self.scale,
            enc: Dense::zeros(self.enc.rows, self.enc.cols),
            mu: Dense::zeros(self.mu.rows, self.mu.cols),
            logvar: Dense::zeros(self.logvar.rows, self.logvar.cols),
            dec_hidden: Dense::zeros(self.dec_hidden.rows, self.dec_hidden.cols),
            dec_out: Dense::zeros(self.dec_out.rows, self.dec_out.cols),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.enc.cols
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.rows
    }

    /// The ten trainable tensors in a fixed order (weight then bias per
    /// layer, encoder to decoder).
    pub fn tensors(&self) -> [&Vec<T>; 10] {
        [
            &self.enc.w,
            &self.enc.b,
            &self.mu.w,
            &self.mu.b,
            &self.logvar.w,
            &self.logvar.b,
            &self.dec_hidden.w,
            &self.dec_hidden.b,
            &self.dec_out.w,
            &self.dec_out.b,
        ]
    }

    /// Mutable view of the same tensors in the same fixed order. The
    /// optimizer walks this order, so it is part of the reproducibility
    /// contract.
    pub fn tensors_mut(&mut self) -> [&mut Vec<T>; 10] {
        [
            &mut self.enc.w,
            &mut self.enc.b,
            &mut self.mu.w,
            &mut self.mu.b,
            &mut self.logvar.w,
            &mut self.logvar.b,
            &mut self.dec_hidden.w,
            &mut self.dec_hidden.b,
            &mut self.dec_out.w,
            &mut self.dec_out.b,
        ]
    }

    fn check_dims(&self) -> Result<()> {
        if !(self.scale > T::zero()) || !self.scale.is_finite() {
            return Err(Error::invalid("autoencoder scale must be positive and finite"));
        }
        let (input, hidden, latent) = (self.enc.cols, self.enc.rows, self.mu.rows);
        let expect = [
            (&self.enc, hidden, input),
            (&self.mu, latent, hidden),
            (&self.logvar, latent, hidden),
            (&self.dec_hidden, hidden, latent),
            (&self.dec_out, input, hidden),
        ];
        for (layer, rows, cols) in expect {
            if layer.rows != rows
                || layer.cols != cols
                || layer.w.len() != rows * cols
                || layer.b.len() != rows
            {
                return Err(Error::invalid("inconsistent autoencoder layer shapes"));
            }
        }
        Ok(())
    }
}

/// Training hyperparameters. `level` is the signature truncation used when
/// fitting the companion drawdown predictor from the same data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    /// Block length; the autoencoder's input and output dimension.
    pub tau: usize,
    pub hidden: usize,
    pub latent: usize,
    pub level: usize,
    pub learning_rate: T,
    /// Probability of zeroing a hidden unit during training (inverted
    /// dropout, so expected activations are unchanged).
    pub dropout: T,
    pub batch: usize,
    pub max_steps: usize,
    /// Stop after this many consecutive steps in which no validation loss
    /// component reaches a new best.
    pub patience: usize,
    /// Weight of the drawdown-matching penalty.
    pub alpha: T,
    /// Optional weight on the latent divergence term; `None` means 1.
    pub beta: Option<T>,
    /// Negative-side slope of the leaky-ReLU activations.
    pub slope: T,
    /// Fraction of blocks (taken from the end) held out for validation.
    pub val_fraction: T,
    pub seed: u64,
}

impl<T: Float> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            tau: 20,
            hidden: 50,
            latent: 10,
            level: 4,
            learning_rate: T::cast(1e-3),
            dropout: T::cast(0.01),
            batch: 50,
            max_steps: 200,
            patience: 3,
            alpha: T::cast(1e-4),
            beta: None,
            slope: T::cast(0.01),
            val_fraction: T::cast(0.1),
            seed: 42,
        }
    }
}

impl<T: Float> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 2 {
            return Err(Error::invalid("block length tau must be >= 2"));
        }
        if self.hidden == 0 || self.latent == 0 {
            return Err(Error::invalid("hidden and latent sizes must be positive"));
        }
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive and finite"));
        }
        if !(self.dropout >= T::zero() && self.dropout < T::one()) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        if self.batch == 0 || self.max_steps == 0 || self.patience == 0 {
            return Err(Error::invalid("batch, max_steps and patience must be positive"));
        }
        if !(self.alpha >= T::zero()) || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be nonnegative and finite"));
        }
        if let Some(b) = self.beta {
            if !(b > T::zero()) || !b.is_finite() {
                return Err(Error::invalid("beta must be positive and finite when set"));
            }
        }
        if !(self.slope >= T::zero() && self.slope <= T::one()) {
            return Err(Error::invalid("activation slope must lie in [0, 1]"));
        }
        if !(self.val_fraction >= T::zero() && self.val_fraction < T::one()) {
            return Err(Error::invalid("val_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Effective weight on the latent divergence term.
    pub(crate) fn kl_weight(&self) -> T {
        self.beta.unwrap_or_else(T::one)
    }
}

/// One training objective evaluation, broken into its components:
/// `total = kl_weight * latent_kl + recon_l2 + alpha * recon_xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts<T> {
    pub total: T,
    /// Divergence of the encoded posterior from the unit Gaussian prior.
    pub latent_kl: T,
    /// Mean squared reconstruction error, summed over coordinates.
    pub recon_l2: T,
    /// Mean squared gap between the predicted drawdowns of a block and of
    /// its reconstruction.
    pub recon_xi: T,
}

impl<T: Float> LossParts<T> {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && self.latent_kl.is_finite()
            && self.recon_l2.is_finite()
            && self.recon_xi.is_finite()
    }
}

pub(crate) fn lrelu<T: Float>(u: T, slope: T) -> T {
    if u > T::zero() {
        u
    } else {
        slope * u
    }
}

pub(crate) fn lrelu_deriv<T: Float>(u: T, slope: T) -> T {
    if u > T::zero() {
        T::one()
    } else {
        slope
    }
}

/// Level every block is measured against inside the network. Rebased blocks
/// hover around 1, so the encoder consumes `value - ORIGIN` and the decoder
/// emits deviations that are shifted back by `ORIGIN`; a freshly initialized
/// network therefore reconstructs flat unit-level paths instead of having to
/// spend its entire step budget climbing from zero to the data level.
pub(crate) fn origin<T: Float>() -> T {
    T::one()
}

/// Per-sample activations kept for the backward pass. `h` and `g` are the
/// values the next layer actually consumed, i.e. after activation and
/// dropout; `xin` is the centered, scale-normalized encoder input and `out`
/// is the finished reconstruction (rescaled, origin added back).
pub(crate) struct Activations<T> {
    pub xin: Vec<T>,
    pub pre_enc: Vec<T>,
    pub h: Vec<T>,
    pub mu: Vec<T>,
    pub logvar: Vec<T>,
    pub z: Vec<T>,
    pub pre_dec: Vec<T>,
    pub g: Vec<T>,
    pub out: Vec<T>,
}

/// Full forward pass for one block. `noise = None` is the deterministic
/// evaluation mode (`z = mu`); masks of `None` disable dropout.
pub(crate) fn sample_forward<T: Float>(
    params: &VaeParams<T>,
    x: &[T],
    noise: Option<&[T]>,
    enc_mask: Option<&[T]>,
    dec_mask: Option<&[T]>,
    slope: T,
) -> Activations<T> {
    let xin: Vec<T> = x.iter().map(|&v| (v - origin()) / params.scale).collect();
    let pre_enc = params.enc.apply(&xin);
    let mut h: Vec<T> = pre_enc.iter().map(|&u| lrelu(u, slope)).collect();
    if let Some(mask) = enc_mask {
        for (hi, m) in h.iter_mut().zip(mask) {
            *hi = *hi * *m;
        }
    }
    let mu = params.mu.apply(&h);
    let logvar = params.logvar.apply(&h);
    let z: Vec<T> = match noise {
        Some(eps) => mu
            .iter()
            .zip(&logvar)
            .zip(eps)
            .map(|((&m, &lv), &e)| m + (lv / T::cast(2)).exp() * e)
            .collect(),
        None => mu.clone(),
    };
    let pre_dec = params.dec_hidden.apply(&z);
    let mut g: Vec<T> = pre_dec.iter().map(|&u| lrelu(u, slope)).collect();
    if let Some(mask) = dec_mask {
        for (gi, m) in g.iter_mut().zip(mask) {
            *gi = *gi * *m;
        }
    }
    let mut out = params.dec_out.apply(&g);
    for v in out.iter_mut() {
        *v = *v * params.scale + origin();
    }
    Activations { xin, pre_enc, h, mu, logvar, z, pre_dec, g, out }
}

/// `-1/2 Σ (1 + logvar - mu² - exp(logvar))`: divergence of a diagonal
/// Gaussian from the standard normal prior.
pub(crate) fn kl_term<T: Float>(mu: &[T], logvar: &[T]) -> T {
    let half = T::cast(0.5);
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| -half * (T::one() + lv - m * m - lv.exp()))
        .sum()
}

pub(crate) fn l2_term<T: Float>(out: &[T], x: &[T]) -> T {
    out.iter().zip(x).map(|(&o, &v)| (o - v) * (o - v)).sum()
}

/// Deterministic decode of one latent point to (rescaled) deviations from
/// the origin level.
pub fn decode<T: Float>(params: &VaeParams<T>, z: &[T], slope: T) -> Result<Vec<T>> {
    if z.len() != params.latent_dim() {
        return Err(Error::invalid(format!(
            "latent point has {} coordinates, the decoder expects {}",
            z.len(),
            params.latent_dim()
        )));
    }
    let g: Vec<T> = params.dec_hidden.apply(z).iter().map(|&u| lrelu(u, slope)).collect();
    let mut out = params.dec_out.apply(&g);
    for v in out.iter_mut() {
        *v = *v * params.scale;
    }
    Ok(out)
}

/// Deterministic encode of one block to its posterior mean.
pub fn encode_mean<T: Float>(params: &VaeParams<T>, x: &[T], slope: T) -> Result<Vec<T>> {
    if x.len() != params.input_dim() {
        return Err(Error::invalid(format!(
            "block has {} points, the encoder expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    let xin: Vec<T> = x.iter().map(|&v| (v - origin()) / params.scale).collect();
    let h: Vec<T> = params.enc.apply(&xin).iter().map(|&u| lrelu(u, slope)).collect();
    Ok(params.mu.apply(&h))
}

/// Average loss over blocks in evaluation mode: `z = mu`, no dropout.
pub(crate) fn eval_parts<T: Float>(
    params: &VaeParams<T>,
    blocks: &[SeriesPath<T>],
    xi_true: &[T],
    drawdown: &DrawdownModel<T>,
    alpha: T,
    kl_weight: T,
    slope: T,
) -> Result<LossParts<T>> {
    debug_assert_eq!(blocks.len(), xi_true.len());
    let n = T::cast(blocks.len());
    // reconstruction terms in normalized units, like the training loss
    let inv_s2 = T::one() / (params.scale * params.scale);
    let mut kl = T::zero();
    let mut l2 = T::zero();
    let mut xi = T::zero();
    for (block, &xi_b) in blocks.iter().zip(xi_true) {
        let act = sample_forward(params, &block.values, None, None, None, slope);
        kl += kl_term(&act.mu, &act.logvar);
        l2 += l2_term(&act.out, &block.values) * inv_s2;
        let recon = SeriesPath::new(act.out, block.dt)
            .map_err(|e| Error::numeric(format!("decoder output unusable: {e}")))?;
        let xi_hat = approximate_drawdown(drawdown, &recon)?;
        xi += (xi_b - xi_hat) * (xi_b - xi_hat) * inv_s2;
    }
    kl /= n;
    l2 /= n;
    xi /= n;
    Ok(LossParts { total: kl_weight * kl + l2 + alpha * xi, latent_kl: kl, recon_l2: l2, recon_xi: xi })
}

/// A trained generator: the autoencoder parameters, the drawdown predictor
/// used in its loss, the training configuration, and the time step of the
/// training blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorModel<T> {
    pub config: TrainConfig<T>,
    pub params: VaeParams<T>,
    pub drawdown: DrawdownModel<T>,
    pub dt: T,
}

impl<T: Float> GeneratorModel<T> {
    /// Draws `n` synthetic blocks by decoding standard-normal latent
    /// points. Fully determined by the seed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<SeriesPath<T>>> {
        if n == 0 {
            return Err(Error::invalid("cannot sample zero paths"));
        }
        self.params.check_dims()?;
        let latent = self.params.latent_dim();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let z: Vec<T> =
                (0..latent).map(|_| T::cast(rng.sample::<f64, _>(StandardNormal))).collect();
            let mut values = decode(&self.params, &z, self.config.slope)?;
            for v in values.iter_mut() {
                *v = *v + origin();
            }
            out.push(
                SeriesPath::new(values, self.dt)
                    .map_err(|e| Error::numeric(format!("decoder output unusable: {e}")))?,
            );
        }
        Ok(out)
    }
}

/// One row of the training history: the loss parts of either the training
/// batch (before that step's update) or the validation set (after it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow<T> {
    pub step: usize,
    pub split: Split,
    pub parts: LossParts<T>,
}

/// Writes history rows as `step,split,total,kl,l2,xi` CSV.
pub fn write_history_csv<T: Float, W: Write>(
    rows: &[HistoryRow<T>],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "step,split,total,kl,l2,xi")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.step, r.split, r.parts.total, r.parts.latent_kl, r.parts.recon_l2, r.parts.recon_xi
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn glorot_init_is_seeded_and_bounded() {
        let a: VaeParams<f64> = VaeParams::init(6, 9, 3, 11);
        let b: VaeParams<f64> = VaeParams::init(6, 9, 3, 11);
        assert_eq!(a, b);
        let c: VaeParams<f64> = VaeParams::init(6, 9, 3, 12);
        assert_ne!(a, c);
        let limit = (6.0f64 / (9 + 6) as f64).sqrt();
        assert!(a.enc.w.iter().all(|w| w.abs() < limit));
        assert!(a.enc.b.iter().all(|&b| b == 0.0));
        assert!(a.enc.w.iter().any(|w| w.abs() > limit / 10.0));
        a.check_dims().unwrap();
    }

    #[test]
    fn dense_apply_matches_hand_computation() {
        let layer = Dense { rows: 2, cols: 3, w: vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0], b: vec![10.0, -1.0] };
        let y = layer.apply(&[1.0, 0.0, 2.0]);
        assert_eq!(y, vec![10.0 + 1.0 + 6.0, -1.0 - 1.0]);
        let back = layer.apply_transposed(&[1.0, 2.0]);
        assert_eq!(back, vec![1.0 - 2.0, 2.0 + 1.0, 3.0]);
    }

    #[test]
    fn kl_term_hand_values() {
        // standard normal posterior: zero divergence
        assert_abs_diff_eq!(kl_term(&[0.0f64], &[0.0]), 0.0, epsilon = 1e-15);
        // mean 1, unit variance: -0.5 (1 + 0 - 1 - 1) = 0.5
        assert_abs_diff_eq!(kl_term(&[1.0f64], &[0.0]), 0.5, epsilon = 1e-15);
        // mean 0, variance e: -0.5 (1 + 1 - 0 - e)
        assert_abs_diff_eq!(
            kl_term(&[0.0f64], &[1.0]),
            -0.5 * (2.0 - std::f64::consts::E),
            epsilon = 1e-15
        );
    }

    #[test]
    fn leaky_relu_and_its_slope() {
        assert_eq!(lrelu(2.0f64, 0.01), 2.0);
        assert_eq!(lrelu(-2.0f64, 0.01), -0.02);
        assert_eq!(lrelu_deriv(2.0f64, 0.01), 1.0);
        assert_eq!(lrelu_deriv(-2.0f64, 0.01), 0.01);
        assert_eq!(lrelu_deriv(0.0f64, 0.01), 0.01);
    }

    #[test]
    fn forward_in_eval_mode_uses_the_posterior_mean() {
        let params: VaeParams<f64> = VaeParams::init(5, 7, 2, 3);
        let x = vec![1.0, 1.01, 0.98, 1.02, 1.0];
        let act = sample_forward(&params, &x, None, None, None, 0.01);
        assert_eq!(act.z, act.mu);
        assert_eq!(act.out.len(), 5);
        let mu = encode_mean(&params, &x, 0.01).unwrap();
        assert_eq!(mu, act.mu);
        // with noise, z moves away from mu
        let eps = vec![1.0, -1.0];
        let act2 = sample_forward(&params, &x, Some(&eps), None, None, 0.01);
        assert_ne!(act2.z, act2.mu);
    }

    #[test]
    fn history_csv_layout() {
        let rows = vec![
            HistoryRow {
                step: 0,
                split: Split::Train,
                parts: LossParts { total: 1.5, latent_kl: 0.25, recon_l2: 1.0, recon_xi: 2500.0 },
            },
            HistoryRow {
                step: 0,
                split: Split::Test,
                parts: LossParts { total: 1.25, latent_kl: 0.25, recon_l2: 0.75, recon_xi: 2500.0 },
            },
        ];
        let mut buf = Vec::new();
        write_history_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "step,split,total,kl,l2,xi\n0,train,1.5,0.25,1,2500\n0,test,1.25,0.25,0.75,2500\n"
        );
    }
}
