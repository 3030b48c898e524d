//! Mini-batch training, class rebalancing and batched inference.

use std::time::Instant;

use log::info;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffcore::{AdamConfig, Tensor};
use crate::error::{config_err, PaadError, Result};
use crate::fieldsim::ObservationFrame;
use crate::loss::{total_loss, LossBreakdown, LossConfig};
use crate::model::{assemble_batch, batch_labels, lidar_tensor, prepare_frame, Paad, PaadConfig, PreparedFrame};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<u64>,
    /// Stop once a step's mean per-frame BCE drops below this.
    pub target_bce: Option<f64>,
    /// Wall-clock cap in seconds, checked between steps.
    pub time_budget_secs: Option<f64>,
    pub rebalance: bool,
    /// Share of anomalous frames in each rebalanced epoch.
    pub anomalous_share: f64,
    /// Fraction of episodes held out for validation by `train`.
    pub validation_fraction: f64,
    pub loss: LossConfig,
    /// Seeds shuffling, resampling and reparameterization noise.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 20,
            max_steps: None,
            target_bce: None,
            time_budget_secs: None,
            rebalance: true,
            anomalous_share: 0.5,
            validation_fraction: 0.2,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return config_err("batch_size must be positive");
        }
        if !(self.adam.lr > 0.0) {
            return config_err("learning rate must be positive");
        }
        if !(self.anomalous_share > 0.0 && self.anomalous_share < 1.0) {
            return config_err("anomalous_share must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return config_err("validation_fraction must lie in [0, 1)");
        }
        if let Some(a) = self.loss.alpha {
            if !(a > 0.0) {
                return config_err("alpha must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: u64,
    /// Means over the epoch's batches.
    pub loss: LossBreakdown,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub steps: u64,
    pub seconds: f64,
    /// Set when `target_bce`, `max_steps` or the time budget ended training.
    pub stop_reason: Option<String>,
}

/// Splits frames into (train, held-out) index sets by whole episodes.
pub fn split_by_episode(frames: &[ObservationFrame], held_out_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut episodes: Vec<u32> = frames.iter().map(|f| f.episode).collect();
    episodes.sort_unstable();
    episodes.dedup();
    episodes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = (episodes.len() as f64 * held_out_fraction).round() as usize;
    if held_out_fraction > 0.0 && episodes.len() > 1 {
        held = held.clamp(1, episodes.len() - 1);
    }
    let held_out: Vec<u32> = episodes[..held].to_vec();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, f) in frames.iter().enumerate() {
        if held_out.contains(&f.episode) {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Draws an epoch of `flags.len()` indices with the requested anomalous
/// share: the majority class is undersampled without replacement, the
/// minority class is repeated and topped up with replacement. Falls back to
/// a plain shuffle when either class is empty.
pub fn rebalance_indices(flags: &[bool], anomalous_share: f64, rng: &mut impl Rng) -> Vec<usize> {
    let (anom, normal): (Vec<usize>, Vec<usize>) = (0..flags.len()).partition(|&i| flags[i]);
    let total = flags.len();
    let mut out = if anom.is_empty() || normal.is_empty() {
        (0..total).collect()
    } else {
        let n_anom = ((total as f64 * anomalous_share).round() as usize).clamp(1, total - 1);
        let mut v = draw(&anom, n_anom, rng);
        v.extend(draw(&normal, total - n_anom, rng));
        v
    };
    out.shuffle(rng);
    out
}

fn draw(pool: &[usize], n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    while n - out.len() >= pool.len() {
        out.extend_from_slice(pool);
    }
    out.extend(pool.choose_multiple(rng, n - out.len()).copied());
    out
}

pub fn prepare_all(frames: &[ObservationFrame], cfg: &PaadConfig) -> Result<Vec<PreparedFrame>> {
    frames.iter().map(|f| prepare_frame(f, cfg)).collect()
}

/// Trains in place. `on_epoch` sees every finished epoch.
pub fn train_model(
    model: &mut Paad<f32>,
    frames: &[PreparedFrame],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainLog> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(PaadError::Input("no training frames".into()));
    }
    let mc = model.config().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let flags: Vec<bool> = frames.iter().map(|f| f.is_anomalous()).collect();
    let start = Instant::now();
    let mut log = TrainLog::default();
    model.set_training(true);
    let recon = mc.trains_reconstruction();

    'outer: for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let order: Vec<usize> = if cfg.rebalance {
            rebalance_indices(&flags, cfg.anomalous_share, &mut rng)
        } else {
            let mut o: Vec<usize> = (0..frames.len()).collect();
            o.shuffle(&mut rng);
            o
        };
        let n = order.len();
        let mut sum = LossBreakdown::default();
        let mut batches = 0u64;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedFrame> = chunk.iter().map(|&i| &frames[i]).collect();
            let noise = if recon {
                let len = batch.len() * mc.latent_dim;
                let z: Vec<f32> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
                Some(Tensor::from_vec(&[batch.len(), mc.latent_dim], z)?)
            } else {
                None
            };
            let input = assemble_batch(&batch, &mc, noise)?;
            let targets = if recon { Some(lidar_tensor(&batch, &mc)?) } else { None };
            let pass = model.forward(&input)?;
            let (loss, grads) = total_loss(&pass, &batch_labels(&batch), targets.as_ref(), n, &cfg.loss)?;
            model.backward(&pass, &grads)?;
            model.params.adam_step(&cfg.adam)?;
            accumulate(&mut sum, &loss);
            batches += 1;
            log.steps += 1;

            let stop = if cfg.target_bce.is_some_and(|t| loss.mean_bce < t) {
                Some(format!("mean BCE {:.4} below target", loss.mean_bce))
            } else if cfg.max_steps.is_some_and(|m| log.steps >= m) {
                Some(format!("reached {} steps", log.steps))
            } else if cfg
                .time_budget_secs
                .is_some_and(|b| start.elapsed().as_secs_f64() >= b)
            {
                Some("time budget exhausted".to_string())
            } else {
                None
            };
            if stop.is_some() {
                log.stop_reason = stop;
                finish_epoch(&mut log, epoch, batches, sum, t0, &mut on_epoch);
                break 'outer;
            }
        }
        finish_epoch(&mut log, epoch, batches, sum, t0, &mut on_epoch);
    }
    model.set_training(false);
    log.seconds = start.elapsed().as_secs_f64();
    Ok(log)
}

fn accumulate(sum: &mut LossBreakdown, l: &LossBreakdown) {
    sum.bce += l.bce;
    sum.recon_nll += l.recon_nll;
    sum.kl += l.kl;
    sum.total += l.total;
    sum.mean_bce += l.mean_bce;
    sum.alpha = l.alpha;
}

fn finish_epoch(
    log: &mut TrainLog,
    epoch: usize,
    batches: u64,
    sum: LossBreakdown,
    t0: Instant,
    on_epoch: &mut impl FnMut(&EpochLog),
) {
    let k = batches.max(1) as f64;
    let entry = EpochLog {
        epoch,
        steps: batches,
        loss: LossBreakdown {
            bce: sum.bce / k,
            recon_nll: sum.recon_nll / k,
            kl: sum.kl / k,
            total: sum.total / k,
            alpha: sum.alpha,
            mean_bce: sum.mean_bce / k,
        },
        seconds: t0.elapsed().as_secs_f64(),
    };
    info!(
        "epoch {} steps {} bce {:.4} recon {:.3} kl {:.3} total {:.3}",
        entry.epoch, entry.steps, entry.loss.mean_bce, entry.loss.recon_nll, entry.loss.kl, entry.loss.total
    );
    on_epoch(&entry);
    log.epochs.push(entry);
}

/// Inference over many frames in batches; returns `[N·T]` probabilities.
pub fn predict_all(model: &Paad<f32>, frames: &[PreparedFrame], batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(frames.len() * model.config().horizon);
    for chunk in frames.chunks(batch_size.max(1)) {
        let refs: Vec<&PreparedFrame> = chunk.iter().collect();
        let input = assemble_batch::<f32>(&refs, model.config(), None)?;
        for p in model.predict(&input)? {
            out.extend(p.probs);
        }
    }
    Ok(out)
}

/// Mean per-frame BCE of the model on `frames` in inference mode.
pub fn mean_bce(model: &Paad<f32>, frames: &[PreparedFrame]) -> Result<f64> {
    let t = model.config().horizon;
    let probs = predict_all(model, frames, 64)?;
    let mut s = 0.0;
    for (f, p) in frames.iter().zip(probs.chunks(t)) {
        s += crate::loss::bce(p, &f.labels)?;
    }
    Ok(s / frames.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rebalanced_epoch_has_requested_share() {
        let flags: Vec<bool> = (0..1000).map(|i| i % 10 == 0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let idx = rebalance_indices(&flags, 0.5, &mut rng);
        assert_eq!(idx.len(), 1000);
        let anom = idx.iter().filter(|&&i| flags[i]).count();
        assert_eq!(anom, 500);
        // Every anomalous frame is used at least once.
        for i in (0..1000).step_by(10) {
            assert!(idx.contains(&i));
        }
        // Normal frames are not repeated.
        let mut normals: Vec<usize> = idx.iter().copied().filter(|&i| !flags[i]).collect();
        normals.sort_unstable();
        normals.dedup();
        assert_eq!(normals.len(), 500);
    }

    #[test]
    fn single_class_falls_back_to_shuffle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut idx = rebalance_indices(&[false; 7], 0.5, &mut rng);
        idx.sort_unstable();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn episode_split_is_disjoint() {
        use crate::fieldsim::{simulate_episodes, EpisodeConfig, WorldConfig};
        let ep = EpisodeConfig { frames: 5, ..EpisodeConfig::default() };
        let frames: Vec<_> = simulate_episodes(&WorldConfig::default(), &ep, 5, 1)
            .unwrap()
            .into_iter()
            .flatten()
            .collect();
        let (a, b) = split_by_episode(&frames, 0.2, 9);
        assert_eq!(a.len() + b.len(), frames.len());
        assert_eq!(b.len(), 5);
        for &i in &a {
            assert!(b.iter().all(|&j| frames[j].episode != frames[i].episode));
        }
    }
}
