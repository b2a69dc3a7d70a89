//! The training objective and its exact gradient for one mini-batch.
//!
//! Both functions take every source of randomness (latent noise, dropout
//! masks) as explicit inputs, so for fixed inputs they are pure functions
//! of the parameters. That makes the analytic gradient directly checkable
//! against finite differences of the loss.

use crate::approximator::{approximate_drawdown, approximate_drawdown_gradient, DrawdownModel};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::paths::SeriesPath;

use super::{
    kl_term, l2_term, lrelu_deriv, sample_forward, Activations, LossParts, TrainConfig, VaeParams,
};

/// The randomness consumed by one training step, drawn up front: one latent
/// noise vector per batch sample, and (when dropout is active) one
/// inverted-dropout mask per hidden layer per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoise<T> {
    pub latent: Vec<Vec<T>>,
    pub enc_masks: Option<Vec<Vec<T>>>,
    pub dec_masks: Option<Vec<Vec<T>>>,
}

impl<T: Float> StepNoise<T> {
    /// Noise-only randomness (dropout disabled) — the shape used for
    /// gradient verification.
    pub fn without_dropout(latent: Vec<Vec<T>>) -> Self {
        StepNoise { latent, enc_masks: None, dec_masks: None }
    }

    fn check(&self, batch: usize, latent_dim: usize, hidden: usize) -> Result<()> {
        if self.latent.len() != batch || self.latent.iter().any(|e| e.len() != latent_dim) {
            return Err(Error::invalid("latent noise does not match the batch"));
        }
        for masks in [&self.enc_masks, &self.dec_masks].into_iter().flatten() {
            if masks.len() != batch || masks.iter().any(|m| m.len() != hidden) {
                return Err(Error::invalid("dropout masks do not match the batch"));
            }
        }
        Ok(())
    }
}

struct SampleParts<T> {
    kl: T,
    l2: T,
    xi: T,
    xi_hat: T,
    recon: SeriesPath<T>,
}

fn sample_parts<T: Float>(
    act: &Activations<T>,
    block: &SeriesPath<T>,
    xi_true: T,
    drawdown: &DrawdownModel<T>,
    inv_s2: T,
) -> Result<SampleParts<T>> {
    let kl = kl_term(&act.mu, &act.logvar);
    // Reconstruction terms are measured in the normalized units the network
    // trains in (deviations divided by the fitted scale). The divergence
    // term is an absolute quantity, so leaving the reconstruction terms in
    // raw price units would make any informative posterior cost more
    // divergence than it could ever repay in reconstruction, and the
    // encoder would collapse onto the prior.
    let l2 = l2_term(&act.out, &block.values) * inv_s2;
    let recon = SeriesPath::new(act.out.clone(), block.dt)
        .map_err(|e| Error::numeric(format!("decoder output unusable: {e}")))?;
    let xi_hat = approximate_drawdown(drawdown, &recon)?;
    let gap = xi_true - xi_hat;
    Ok(SampleParts { kl, l2, xi: gap * gap * inv_s2, xi_hat, recon })
}

fn forward_batch<T: Float>(
    params: &VaeParams<T>,
    batch: &[SeriesPath<T>],
    xi_true: &[T],
    noise: &StepNoise<T>,
    drawdown: &DrawdownModel<T>,
    cfg: &TrainConfig<T>,
    mut per_sample: impl FnMut(usize, &Activations<T>, &SampleParts<T>) -> Result<()>,
) -> Result<LossParts<T>> {
    if batch.is_empty() || batch.len() != xi_true.len() {
        return Err(Error::invalid("batch and drawdown targets must align and be non-empty"));
    }
    params.check_dims()?;
    noise.check(batch.len(), params.latent_dim(), params.enc.rows)?;
    if batch.iter().any(|b| b.len() != params.input_dim()) {
        return Err(Error::invalid("block length does not match the autoencoder input"));
    }
    let n = T::cast(batch.len());
    let inv_s2 = T::one() / (params.scale * params.scale);
    let mut kl = T::zero();
    let mut l2 = T::zero();
    let mut xi = T::zero();
    for (i, (block, &xi_b)) in batch.iter().zip(xi_true).enumerate() {
        let act = sample_forward(
            params,
            &block.values,
            Some(&noise.latent[i]),
            noise.enc_masks.as_ref().map(|m| m[i].as_slice()),
            noise.dec_masks.as_ref().map(|m| m[i].as_slice()),
            cfg.slope,
        );
        let parts = sample_parts(&act, block, xi_b, drawdown, inv_s2)?;
        kl += parts.kl;
        l2 += parts.l2;
        xi += parts.xi;
        per_sample(i, &act, &parts)?;
    }
    kl /= n;
    l2 /= n;
    xi /= n;
    Ok(LossParts {
        total: cfg.kl_weight() * kl + l2 + cfg.alpha * xi,
        latent_kl: kl,
        recon_l2: l2,
        recon_xi: xi,
    })
}

/// Training loss of one batch under fixed randomness.
pub fn batch_loss<T: Float>(
    params: &VaeParams<T>,
    batch: &[SeriesPath<T>],
    xi_true: &[T],
    noise: &StepNoise<T>,
    drawdown: &DrawdownModel<T>,
    cfg: &TrainConfig<T>,
) -> Result<LossParts<T>> {
    forward_batch(params, batch, xi_true, noise, drawdown, cfg, |_, _, _| Ok(()))
}

/// Training loss and its exact gradient with respect to every parameter
/// tensor, under the same fixed randomness as [`batch_loss`].
pub fn batch_gradients<T: Float>(
    params: &VaeParams<T>,
    batch: &[SeriesPath<T>],
    xi_true: &[T],
    noise: &StepNoise<T>,
    drawdown: &DrawdownModel<T>,
    cfg: &TrainConfig<T>,
) -> Result<(LossParts<T>, VaeParams<T>)> {
    let mut grads = params.zeros_like();
    let half = T::cast(0.5);
    let two = T::cast(2);
    let inv_n = T::one() / T::cast(batch.len().max(1));
    let inv_s2 = T::one() / (params.scale * params.scale);
    let kl_w = cfg.kl_weight();
    let parts = forward_batch(params, batch, xi_true, noise, drawdown, cfg, |i, act, parts| {
        let block = &batch[i];
        // dL/d out: the squared reconstruction error plus, when active, the
        // drawdown-matching term chained through the predictor's gradient;
        // both terms carry the normalized-units factor.
        let mut g_out: Vec<T> = act
            .out
            .iter()
            .zip(&block.values)
            .map(|(&o, &v)| two * inv_n * inv_s2 * (o - v))
            .collect();
        if cfg.alpha > T::zero() {
            let dxi = approximate_drawdown_gradient(drawdown, &parts.recon)?;
            let coeff = two * cfg.alpha * inv_n * inv_s2 * (parts.xi_hat - xi_true[i]);
            for (g, &d) in g_out.iter_mut().zip(&dxi) {
                *g = *g + coeff * d;
            }
        }

        // reconstructions are `origin + scale * (W g + b)`, so the gradient
        // entering the output layer picks up the scale factor
        let g_raw: Vec<T> = g_out.iter().map(|&g| g * params.scale).collect();
        grads.dec_out.add_outer(&g_raw, &act.g);
        let mut g_g = params.dec_out.apply_transposed(&g_raw);
        if let Some(masks) = &noise.dec_masks {
            for (g, m) in g_g.iter_mut().zip(&masks[i]) {
                *g = *g * *m;
            }
        }
        let g_pre_dec: Vec<T> = g_g
            .iter()
            .zip(&act.pre_dec)
            .map(|(&g, &u)| g * lrelu_deriv(u, cfg.slope))
            .collect();
        grads.dec_hidden.add_outer(&g_pre_dec, &act.z);
        let g_z = params.dec_hidden.apply_transposed(&g_pre_dec);

        // z = mu + exp(logvar/2) * eps, plus the direct divergence terms
        // d kl/d mu = mu and d kl/d logvar = (exp(logvar) - 1)/2.
        let eps = &noise.latent[i];
        let g_mu: Vec<T> = g_z
            .iter()
            .zip(&act.mu)
            .map(|(&gz, &m)| gz + kl_w * inv_n * m)
            .collect();
        let g_lv: Vec<T> = g_z
            .iter()
            .zip(&act.logvar)
            .zip(eps)
            .map(|((&gz, &lv), &e)| {
                gz * half * (lv * half).exp() * e + kl_w * inv_n * half * (lv.exp() - T::one())
            })
            .collect();
        grads.mu.add_outer(&g_mu, &act.h);
        grads.logvar.add_outer(&g_lv, &act.h);

        let mut g_h = params.mu.apply_transposed(&g_mu);
        for (g, v) in g_h.iter_mut().zip(params.logvar.apply_transposed(&g_lv)) {
            *g = *g + v;
        }
        if let Some(masks) = &noise.enc_masks {
            for (g, m) in g_h.iter_mut().zip(&masks[i]) {
                *g = *g * *m;
            }
        }
        let g_pre_enc: Vec<T> = g_h
            .iter()
            .zip(&act.pre_enc)
            .map(|(&g, &u)| g * lrelu_deriv(u, cfg.slope))
            .collect();
        grads.enc.add_outer(&g_pre_enc, &act.xin);
        Ok(())
    })?;
    Ok((parts, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::fit_drawdown_approximator;
    use crate::drawdown::TargetKind;
    use crate::paths::{generate_fbm_paths, FbmConfig};
    use crate::regression::CvConfig;

    fn toy_blocks(n: usize, tau: usize) -> Vec<SeriesPath<f64>> {
        let cfg = FbmConfig {
            hurst: 0.6,
            n: tau,
            k: n,
            mu: 0.0,
            sigma: 0.02,
            seed: 515,
        };
        generate_fbm_paths(&cfg).unwrap()
    }

    fn toy_drawdown(blocks: &[SeriesPath<f64>]) -> DrawdownModel<f64> {
        let cv = CvConfig { folds: 4, ..CvConfig::default() };
        fit_drawdown_approximator(blocks, 2, TargetKind::Maximum, &cv, false, 7).unwrap()
    }

    fn fixed_noise(batch: usize, latent: usize, scale: f64) -> StepNoise<f64> {
        StepNoise::without_dropout(
            (0..batch)
                .map(|i| {
                    (0..latent)
                        .map(|j| scale * ((i * latent + j) as f64 * 0.7).sin())
                        .collect()
                })
                .collect(),
        )
    }

    /// Central finite differences of the batch loss in every coordinate of
    /// every tensor must agree with the analytic gradient.
    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let tau = 8;
        let blocks = toy_blocks(24, tau);
        let dd = toy_drawdown(&blocks);
        let cfg = TrainConfig::<f64> {
            tau,
            hidden: 6,
            latent: 3,
            level: 2,
            dropout: 0.0,
            alpha: 0.05,
            beta: Some(0.7),
            batch: 3,
            ..TrainConfig::default()
        };
        let batch = blocks[..3].to_vec();
        let xi: Vec<f64> =
            batch.iter().map(|b| approximate_drawdown(&dd, b).unwrap()).collect();
        let noise = fixed_noise(3, 3, 0.8);
        let mut params = VaeParams::<f64>::init(tau, cfg.hidden, cfg.latent, 99);
        params.scale = 0.05;

        let (_, grads) = batch_gradients(&params, &batch, &xi, &noise, &dd, &cfg).unwrap();
        let h = 1e-5;
        let names = ["enc.w", "enc.b", "mu.w", "mu.b", "logvar.w", "logvar.b", "dh.w", "dh.b", "do.w", "do.b"];
        let mut checked = 0usize;
        for (ti, name) in names.iter().enumerate() {
            for j in 0..grads.tensors()[ti].len() {
                let orig = params.tensors_mut()[ti][j];
                params.tensors_mut()[ti][j] = orig + h;
                let up = batch_loss(&params, &batch, &xi, &noise, &dd, &cfg).unwrap().total;
                params.tensors_mut()[ti][j] = orig - h;
                let dn = batch_loss(&params, &batch, &xi, &noise, &dd, &cfg).unwrap().total;
                params.tensors_mut()[ti][j] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = grads.tensors()[ti][j];
                let denom = fd.abs().max(an.abs()).max(1e-5);
                assert!(
                    ((fd - an) / denom).abs() < 1e-4,
                    "{name}[{j}]: fd={fd:.9} analytic={an:.9}"
                );
                checked += 1;
            }
        }
        assert!(checked > 100, "gradient check covered {checked} coordinates");
    }

    /// Same check with dropout masks active: masked units must receive zero
    /// gradient and the rest must still match finite differences.
    #[test]
    fn gradient_respects_dropout_masks() {
        let tau = 6;
        let blocks = toy_blocks(16, tau);
        let dd = toy_drawdown(&blocks);
        let cfg = TrainConfig::<f64> {
            tau,
            hidden: 5,
            latent: 2,
            level: 2,
            dropout: 0.2,
            alpha: 0.02,
            batch: 2,
            ..TrainConfig::default()
        };
        let batch = blocks[..2].to_vec();
        let xi: Vec<f64> =
            batch.iter().map(|b| approximate_drawdown(&dd, b).unwrap()).collect();
        let keep = 1.0 / 0.8;
        let noise = StepNoise {
            latent: fixed_noise(2, 2, 0.5).latent,
            enc_masks: Some(vec![
                vec![keep, 0.0, keep, keep, 0.0],
                vec![0.0, keep, keep, 0.0, keep],
            ]),
            dec_masks: Some(vec![
                vec![keep, keep, 0.0, keep, keep],
                vec![keep, 0.0, keep, keep, 0.0],
            ]),
        };
        let mut params = VaeParams::<f64>::init(tau, cfg.hidden, cfg.latent, 1234);
        params.scale = 1.7;
        let (_, grads) = batch_gradients(&params, &batch, &xi, &noise, &dd, &cfg).unwrap();
        let h = 1e-5;
        for ti in 0..10 {
            for j in 0..grads.tensors()[ti].len() {
                let orig = params.tensors_mut()[ti][j];
                params.tensors_mut()[ti][j] = orig + h;
                let up = batch_loss(&params, &batch, &xi, &noise, &dd, &cfg).unwrap().total;
                params.tensors_mut()[ti][j] = orig - h;
                let dn = batch_loss(&params, &batch, &xi, &noise, &dd, &cfg).unwrap().total;
                params.tensors_mut()[ti][j] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = grads.tensors()[ti][j];
                let denom = fd.abs().max(an.abs()).max(1e-5);
                assert!(((fd - an) / denom).abs() < 1e-4, "tensor {ti}[{j}]: fd={fd} an={an}");
            }
        }
    }

    /// With alpha = 0 the gradients cannot depend on the drawdown model at
    /// all: swapping it for a differently fitted one changes nothing.
    #[test]
    fn alpha_zero_makes_the_drawdown_model_inert() {
        let tau = 8;
        let blocks = toy_blocks(20, tau);
        let dd_a = toy_drawdown(&blocks);
        let cv = CvConfig { folds: 4, ..CvConfig::default() };
        let dd_b =
            fit_drawdown_approximator(&blocks, 3, TargetKind::Integrated, &cv, false, 8).unwrap();
        assert_ne!(dd_a.net.weights.len(), dd_b.net.weights.len());
        let cfg = TrainConfig::<f64> {
            tau,
            hidden: 6,
            latent: 3,
            alpha: 0.0,
            dropout: 0.0,
            batch: 4,
            ..TrainConfig::default()
        };
        let batch = blocks[..4].to_vec();
        let xi_a: Vec<f64> =
            batch.iter().map(|b| approximate_drawdown(&dd_a, b).unwrap()).collect();
        let xi_b: Vec<f64> =
            batch.iter().map(|b| approximate_drawdown(&dd_b, b).unwrap()).collect();
        let noise = fixed_noise(4, 3, 1.0);
        let params = VaeParams::<f64>::init(tau, 6, 3, 5);
        let (pa, ga) = batch_gradients(&params, &batch, &xi_a, &noise, &dd_a, &cfg).unwrap();
        let (pb, gb) = batch_gradients(&params, &batch, &xi_b, &noise, &dd_b, &cfg).unwrap();
        assert_eq!(ga, gb);
        assert_eq!(pa.recon_l2, pb.recon_l2);
        assert_eq!(pa.total, pb.total);
        // the measured drawdown gap still differs, it just carries no weight
        assert_ne!(pa.recon_xi, pb.recon_xi);
    }
}
