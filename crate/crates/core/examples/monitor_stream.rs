//! Streams a drive through a briefly trained detector and the
//! three-in-a-row alert rule, printing the event log around each alert.
//!
//! ```bash
//! cargo run --release --example monitor_stream
//! ```

use paad::cli::{prepare_all, train_model, TrainConfig};
use paad::fieldsim::{simulate_episodes, EpisodeConfig, WorldConfig};
use paad::model::{Paad, PaadConfig};
use paad::monitor::{format_event_log, process_stream, summarize, MonitorConfig};

pub fn run_example() -> paad::Result<()> {
    let ep = EpisodeConfig { frames: 250, ..EpisodeConfig::default() };
    let world = WorldConfig::default();
    let train: Vec<_> = simulate_episodes(&world, &ep, 3, 12)?.into_iter().flatten().collect();
    let drive = simulate_episodes(&world, &ep, 1, 4242)?.remove(0);

    let cfg = PaadConfig::default();
    let mut model = Paad::<f32>::new(cfg.clone())?;
    train_model(&mut model, &prepare_all(&train, &cfg)?, &TrainConfig { epochs: 3, ..TrainConfig::default() }, |_| {})?;

    let mc = MonitorConfig::default();
    let log = process_stream(&drive, &model, &mc)?;
    let anomalous: Vec<bool> = drive.iter().map(|f| f.is_anomalous()).collect();
    let s = summarize(&log.events, &anomalous)?;
    println!(
        "{} frames at {:.0} fps (max latency {:.1} ms, budget {:.0} ms)",
        s.frames,
        s.frames as f64 / log.total_time.as_secs_f64(),
        log.max_latency.as_secs_f64() * 1e3,
        mc.frame_budget().as_secs_f64() * 1e3
    );
    println!(
        "{} alerts; {} of {} anomaly windows detected; {} false detections",
        s.alerts, s.anomalies_detected, s.anomaly_windows, s.false_detections
    );
    for (i, _) in log.events.iter().enumerate().filter(|(_, e)| e.alert).take(3) {
        let lo = i.saturating_sub(3);
        print!("alert at frame {i}:\n{}", format_event_log(&log.events[lo..=i]));
        println!("  anomalous here: {}", anomalous[i]);
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
