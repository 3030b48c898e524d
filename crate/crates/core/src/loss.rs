//! Training objective: alpha-weighted per-step BCE plus the negative ELBO
//! of the LiDAR variational encoder.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Real, Tensor};
use crate::error::{config_err, dim_err, PaadError, Result};
use crate::model::{ForwardPass, OutputGrads};

/// Probabilities are clamped this far from 0 and 1 inside the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean over the horizon of the binary cross-entropy.
pub fn bce<F: Real>(probs: &[F], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return dim_err(format!(
            "bce: {} probabilities vs {} labels",
            probs.len(),
            labels.len()
        ));
    }
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.as_f64().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y != 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / probs.len() as f64)
}

/// `‖x − mean‖² / (2σ²)`; the Gaussian normalizing constant is dropped.
pub fn gaussian_recon_nll<F: Real>(x: &[F], mean: &[F], sigma_hyper: f64) -> Result<f64> {
    if !(sigma_hyper > 0.0) {
        return config_err(format!("reconstruction sigma {sigma_hyper} must be positive"));
    }
    if x.len() != mean.len() {
        return dim_err(format!("recon: {} targets vs {} means", x.len(), mean.len()));
    }
    let sq: f64 = x
        .iter()
        .zip(mean)
        .map(|(&a, &m)| (a.as_f64() - m.as_f64()).powi(2))
        .sum();
    Ok(sq / (2.0 * sigma_hyper * sigma_hyper))
}

/// `KL(N(mu, diag σ²) ‖ N(0, I))`.
pub fn kl_to_standard_normal<F: Real>(mu: &[F], sigma: &[F]) -> Result<f64> {
    if mu.len() != sigma.len() {
        return dim_err(format!("kl: {} means vs {} deviations", mu.len(), sigma.len()));
    }
    let mut kl = 0.0;
    for (&m, &s) in mu.iter().zip(sigma) {
        let (m, s) = (m.as_f64(), s.as_f64());
        if !(s > 0.0) {
            return Err(PaadError::Numeric(format!("kl: non-positive sigma {s}")));
        }
        let var = s * s;
        kl += m * m + var - 1.0 - var.ln();
    }
    Ok(0.5 * kl)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// BCE weight; `None` means `0.1 · N` for a dataset of `N` frames.
    pub alpha: Option<f64>,
    pub sigma_hyper: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: None,
            sigma_hyper: 1.0,
        }
    }
}

impl LossConfig {
    pub fn alpha_for(&self, dataset_size: usize) -> f64 {
        self.alpha.unwrap_or(0.1 * dataset_size as f64)
    }
}

/// Loss terms as dataset-sum estimates (batch sums scaled by `N / B`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bce: f64,
    pub recon_nll: f64,
    pub kl: f64,
    pub total: f64,
    pub alpha: f64,
    /// Unscaled mean BCE per frame.
    pub mean_bce: f64,
}

/// Evaluates the objective for a forward pass and returns the gradients
/// with respect to the network outputs.
///
/// `labels` is `[B·T]` row-major. `lidar_targets` (`[B, L]`, normalized) is
/// required whenever the pass carries a reconstruction; the reconstruction
/// and KL terms are skipped when it does not.
pub fn total_loss<F: Real>(
    pass: &ForwardPass<F>,
    labels: &[u8],
    lidar_targets: Option<&Tensor<F>>,
    dataset_size: usize,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, OutputGrads<F>)> {
    let shape = pass.probs.shape();
    let (batch, horizon) = (shape[0], shape[1]);
    if labels.len() != batch * horizon {
        return dim_err(format!(
            "{} labels for {batch} frames of horizon {horizon}",
            labels.len()
        ));
    }
    if dataset_size == 0 {
        return config_err("dataset size must be positive");
    }
    let alpha = cfg.alpha_for(dataset_size);
    let scale = dataset_size as f64 / batch as f64;

    let mut bce_sum = 0.0;
    let mut g_logits = Tensor::zeros(shape);
    let k = scale * alpha / horizon as f64;
    for b in 0..batch {
        let p = pass.probs.row(b);
        let y = &labels[b * horizon..(b + 1) * horizon];
        bce_sum += bce(p, y)?;
        for ((g, &pi), &yi) in g_logits.row_mut(b).iter_mut().zip(p).zip(y) {
            *g = F::c(k * (pi.as_f64() - yi as f64));
        }
    }

    let mut out = LossBreakdown {
        bce: scale * bce_sum,
        alpha,
        mean_bce: bce_sum / batch as f64,
        ..LossBreakdown::default()
    };
    let mut grads = OutputGrads {
        logits: g_logits,
        mu: None,
        sigma: None,
        reconstruction: None,
    };

    if let (Some(mean), Some(post)) = (&pass.reconstruction, &pass.posterior) {
        let targets = lidar_targets
            .ok_or_else(|| PaadError::Input("reconstruction needs LiDAR targets".into()))?;
        targets.expect_shape(mean.shape(), "LiDAR targets")?;
        let s2 = cfg.sigma_hyper * cfg.sigma_hyper;
        let mut recon = 0.0;
        let mut kl = 0.0;
        let mut g_rec = Tensor::zeros(mean.shape());
        for b in 0..batch {
            recon += gaussian_recon_nll(targets.row(b), mean.row(b), cfg.sigma_hyper)?;
            kl += kl_to_standard_normal(post.mu.row(b), post.sigma.row(b))?;
        }
        for ((g, &m), &x) in g_rec.data_mut().iter_mut().zip(mean.data()).zip(targets.data()) {
            *g = F::c(scale * (m.as_f64() - x.as_f64()) / s2);
        }
        let g_mu = post.mu.map(|m| F::c(scale * m.as_f64()));
        let g_sigma = post.sigma.map(|s| {
            let s = s.as_f64();
            F::c(scale * (s - 1.0 / s))
        });
        out.recon_nll = scale * recon;
        out.kl = scale * kl;
        grads.reconstruction = Some(g_rec);
        grads.mu = Some(g_mu);
        grads.sigma = Some(g_sigma);
    }
    out.total = out.alpha * out.bce + out.recon_nll + out.kl;
    if !out.total.is_finite() {
        return Err(PaadError::Numeric(format!("non-finite loss {out:?}")));
    }
    Ok((out, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_reference_values() {
        let half = [0.5f64; 10];
        assert!((bce(&half, &[1, 0, 1, 0, 0, 0, 1, 1, 1, 0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((bce(&[0.9f64], &[1]).unwrap() - 0.10536051565782628).abs() < 1e-12);
        assert!(bce(&[1.0f64, 0.0], &[1, 0]).unwrap() < 1e-6);
        assert!(bce(&[0.5f64], &[1, 0]).is_err());
    }

    #[test]
    fn recon_reference_values() {
        assert_eq!(gaussian_recon_nll(&[1.0f64, 2.0], &[1.0, 2.0], 1.0).unwrap(), 0.0);
        assert_eq!(gaussian_recon_nll(&[2.0f64], &[0.0], 1.0).unwrap(), 2.0);
        assert_eq!(gaussian_recon_nll(&[1.0f64], &[0.0], 0.5).unwrap(), 2.0);
        assert!(gaussian_recon_nll(&[1.0f64], &[0.0], 0.0).is_err());
    }

    #[test]
    fn kl_reference_values() {
        assert_eq!(kl_to_standard_normal(&[0.0f64; 4], &[1.0; 4]).unwrap(), 0.0);
        assert_eq!(kl_to_standard_normal(&[1.0f64], &[1.0]).unwrap(), 0.5);
        let want = 0.5 * (4.0 - 1.0 - 4f64.ln());
        assert!((kl_to_standard_normal(&[0.0f64], &[2.0]).unwrap() - want).abs() < 1e-12);
        assert!(matches!(
            kl_to_standard_normal(&[0.0f64], &[0.0]),
            Err(PaadError::Numeric(_))
        ));
    }

    #[test]
    fn default_alpha_is_a_tenth_of_dataset() {
        assert_eq!(LossConfig::default().alpha_for(5000), 500.0);
    }
}
