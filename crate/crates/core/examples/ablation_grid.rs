//! Trains each sensor and fusion variant identically and prints a grid of
//! test metrics.
//!
//! ```bash
//! cargo run --release --example ablation_grid
//! ```

use paad::cli::{predict_all, prepare_all, train_model, TrainConfig};
use paad::fieldsim::{simulate_episodes, EpisodeConfig, WorldConfig};
use paad::metrics::MetricsReport;
use paad::model::{AttentionKind, FusionMode, Paad, PaadConfig, PathView};

pub fn run_example() -> paad::Result<()> {
    let ep = EpisodeConfig { frames: 200, ..EpisodeConfig::default() };
    let world = WorldConfig::default();
    let train: Vec<_> = simulate_episodes(&world, &ep, 3, 5)?.into_iter().flatten().collect();
    let test: Vec<_> = simulate_episodes(&world, &ep, 1, 505)?.into_iter().flatten().collect();

    let base = PaadConfig::default();
    let variants = [
        ("lidar only", PaadConfig { fusion_mode: FusionMode::LidarOnly, ..base.clone() }),
        ("camera only", PaadConfig { fusion_mode: FusionMode::CameraOnly, ..base.clone() }),
        ("mlp fusion", PaadConfig { attention: AttentionKind::Mlp, ..base.clone() }),
        ("no reconstruction", PaadConfig { reconstruction: false, ..base.clone() }),
        ("bev path", PaadConfig { path_view: PathView::Bev, ..base.clone() }),
        ("paad", base.clone()),
    ];
    println!("{:<18} {:>6} {:>7}", "variant", "F1", "PR-AUC");
    for (name, cfg) in variants {
        let tr = prepare_all(&train, &cfg)?;
        let te = prepare_all(&test, &cfg)?;
        let mut model = Paad::<f32>::new(cfg)?;
        train_model(&mut model, &tr, &TrainConfig { epochs: 2, ..TrainConfig::default() }, |_| {})?;
        let labels: Vec<u8> = te.iter().flat_map(|f| f.labels.iter().copied()).collect();
        let r = MetricsReport::from_predictions(name, te.len(), &predict_all(&model, &te, 64)?, &labels, 0.9, 100)?;
        println!("{:<18} {:>6.3} {:>7.3}", name, r.f1.f1, r.pr_auc);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
