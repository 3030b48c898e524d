//! End-to-end gradient verification of network + loss in 64-bit arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::PaadConfig;
use super::network::{NetworkInput, Paad};
use crate::diffcore::gradcheck::{compare, probe, sample_indices, GradReport, STEP, TOLERANCE};
use crate::diffcore::Tensor;
use crate::error::Result;
use crate::loss::{total_loss, LossConfig};

/// Compares the analytic gradient of the full training loss (including the
/// reparameterized sample, with frozen noise) against central differences
/// for up to `per_tensor` coordinates of every parameter tensor.
pub fn network_gradient_check(
    config: &PaadConfig,
    seed: u64,
    per_tensor: usize,
) -> Result<Vec<(String, GradReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PaadConfig {
        init_seed: seed,
        ..config.clone()
    };
    let mut model = Paad::<f64>::new(cfg.clone())?;
    model.set_training(true);
    // Non-zero biases so no unit starts exactly at a ReLU kink.
    for p in model.params.iter_mut() {
        if p.name.ends_with(".bias") {
            for v in p.value.data_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }

    let batch = 3;
    let mut uniform = |shape: &[usize], lo: f64, hi: f64| {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect())
    };
    let (pr, pc) = cfg.path_input_hw()?;
    let lidar = uniform(&[batch, cfg.lidar_len], 0.0, 1.0)?;
    let input = NetworkInput {
        images: Some(uniform(&[batch, 1, cfg.image_rows, cfg.image_cols], 0.0, 1.0)?),
        lidar: Some(lidar.clone()),
        paths: uniform(&[batch, 1, pr, pc], 0.0, 1.0)?.map(|v| if v > 0.7 { 1.0 } else { 0.0 }),
        noise: Some(uniform(&[batch, cfg.latent_dim], -2.0, 2.0)?),
    };
    let labels: Vec<u8> = (0..batch * cfg.horizon)
        .map(|_| rng.random_bool(0.4) as u8)
        .collect();
    let loss_cfg = LossConfig::default();
    let dataset = 10;
    let eval = |m: &Paad<f64>| -> f64 {
        let pass = m.forward(&input).expect("forward");
        total_loss(&pass, &labels, Some(&lidar), dataset, &loss_cfg)
            .expect("loss")
            .0
            .total
    };

    model.params.zero_grads();
    let pass = model.forward(&input)?;
    let (_, grads) = total_loss(&pass, &labels, Some(&lidar), dataset, &loss_cfg)?;
    model.backward(&pass, &grads)?;

    let names: Vec<String> = model.params.iter().map(|p| p.name.clone()).collect();
    let mut reports = Vec::with_capacity(names.len());
    for name in names {
        let id = model.params.id_of(&name).expect("known parameter");
        let analytic = model.params.grad(id).data().to_vec();
        let idx = sample_indices(&mut rng, analytic.len(), per_tensor);
        let mut probes = Vec::with_capacity(idx.len());
        for &i in &idx {
            let orig = model.params.value(id).data()[i];
            probes.push(probe(STEP, |off| {
                model.params.value_mut(id).data_mut()[i] = orig + off;
                eval(&model)
            }));
            model.params.value_mut(id).data_mut()[i] = orig;
        }
        let an: Vec<f64> = idx.iter().map(|&i| analytic[i]).collect();
        reports.push((name, compare(&an, &probes, TOLERANCE)));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AttentionKind, FusionMode, PathView};

    fn assert_all_pass(cfg: &PaadConfig, seed: u64) {
        for (name, r) in network_gradient_check(cfg, seed, 8).unwrap() {
            assert!(r.passes(TOLERANCE), "{name}: {r:?}");
        }
    }

    #[test]
    fn full_model_gradients() {
        assert_all_pass(&PaadConfig::compact(), 1);
    }

    #[test]
    fn ablation_gradients() {
        let base = PaadConfig::compact();
        for cfg in [
            PaadConfig { attention: AttentionKind::Mlp, ..base.clone() },
            PaadConfig { fusion_mode: FusionMode::CameraOnly, ..base.clone() },
            PaadConfig { fusion_mode: FusionMode::LidarOnly, ..base.clone() },
            PaadConfig { reconstruction: false, ..base.clone() },
            PaadConfig { path_view: PathView::Bev, ..base.clone() },
        ] {
            assert_all_pass(&cfg, 2);
        }
    }
}
