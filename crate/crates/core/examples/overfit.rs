//! Memorizes 16 simulated frames: the mean BCE should collapse well below
//! 0.05 within a few hundred Adam steps.
//!
//! ```bash
//! cargo run --release --example overfit
//! ```

use paad::cli::{mean_bce, prepare_all, train_model, TrainConfig};
use paad::fieldsim::{simulate_episodes, EpisodeConfig, WorldConfig};
use paad::model::{Paad, PaadConfig, PreparedFrame};

pub fn run_example() -> paad::Result<()> {
    let episode = EpisodeConfig { frames: 300, ..EpisodeConfig::default() };
    let frames: Vec<_> = simulate_episodes(&WorldConfig::default(), &episode, 2, 77)?
        .into_iter()
        .flatten()
        .collect();
    let cfg = PaadConfig::default();
    let all = prepare_all(&frames, &cfg)?;
    // Half failures, half nominal.
    let mut set: Vec<PreparedFrame> = all.iter().filter(|f| f.is_anomalous()).take(8).cloned().collect();
    set.extend(all.iter().filter(|f| !f.is_anomalous()).take(16 - set.len()).cloned());

    let mut model = Paad::<f32>::new(cfg)?;
    println!("initial mean BCE {:.4}", mean_bce(&model, &set)?);
    let train = TrainConfig {
        batch_size: set.len(),
        epochs: 2000,
        target_bce: Some(0.05),
        rebalance: false,
        ..TrainConfig::default()
    };
    let log = train_model(&mut model, &set, &train, |e| {
        if e.epoch % 20 == 0 {
            println!("step {:>4}  bce {:.4}  recon {:.2}  kl {:.2}", e.epoch, e.loss.mean_bce, e.loss.recon_nll, e.loss.kl);
        }
    })?;
    println!(
        "{} steps in {:.1}s ({}); final mean BCE {:.4}",
        log.steps,
        log.seconds,
        log.stop_reason.as_deref().unwrap_or("step budget used"),
        mean_bce(&model, &set)?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
