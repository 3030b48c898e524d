//! Trains the full detector on simulated drives and scores it on drives
//! from unseen seeds.
//!
//! ```bash
//! cargo run --release --example train_and_evaluate -- 10 8
//! ```
//! Arguments: training episodes of 500 frames, epochs.

use paad::cli::{predict_all, prepare_all, train_model, TrainConfig};
use paad::fieldsim::{simulate_episodes, EpisodeConfig, ObservationFrame, WorldConfig};
use paad::metrics::MetricsReport;
use paad::model::{Paad, PaadConfig};

fn drives(episodes: usize, frames: usize, seed: u64) -> paad::Result<Vec<ObservationFrame>> {
    let ep = EpisodeConfig { frames, ..EpisodeConfig::default() };
    Ok(simulate_episodes(&WorldConfig::default(), &ep, episodes, seed)?
        .into_iter()
        .flatten()
        .collect())
}

pub fn run_scaled(episodes: usize, frames: usize, epochs: usize) -> paad::Result<MetricsReport> {
    let cfg = PaadConfig::default();
    let train = prepare_all(&drives(episodes, frames, 1)?, &cfg)?;
    let test = prepare_all(&drives(2, frames, 9001)?, &cfg)?;
    let mut model = Paad::<f32>::new(cfg)?;
    let tc = TrainConfig { epochs, ..TrainConfig::default() };
    let log = train_model(&mut model, &train, &tc, |e| {
        println!("epoch {:>2}  bce {:.4}  ({:.1}s)", e.epoch, e.loss.mean_bce, e.seconds);
    })?;
    let preds = predict_all(&model, &test, 64)?;
    let labels: Vec<u8> = test.iter().flat_map(|f| f.labels.iter().copied()).collect();
    let report = MetricsReport::from_predictions("paad", test.len(), &preds, &labels, 0.9, 200)?;
    println!(
        "trained on {} frames in {:.0}s; test {} frames: F1 {:.3} (P {:.3} R {:.3}), PR-AUC {:.3}",
        train.len(),
        log.seconds,
        report.frames,
        report.f1.f1,
        report.f1.precision,
        report.f1.recall,
        report.pr_auc
    );
    Ok(report)
}

pub fn run_example() -> paad::Result<()> {
    run_scaled(3, 200, 2).map(|_| ())
}

#[allow(dead_code)]
fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let result = match args.as_slice() {
        [e, n, ..] => run_scaled(*e, 500, *n).map(|_| ()),
        _ => run_example(),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
