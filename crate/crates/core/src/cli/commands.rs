//! Implementations behind the `simulate`, `train`, `eval`, `monitor` and
//! `plot` subcommands. Each returns the text it would print.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::dataset::{load_dataset, save_dataset, DatasetHeader};
use super::train::{predict_all, prepare_all, split_by_episode, train_model, TrainLog};
use crate::error::{PaadError, Result};
use crate::fieldsim::{simulate_episodes, ObservationFrame};
use crate::metrics::MetricsReport;
use crate::model::{load_checkpoint, save_checkpoint, Paad, PreparedFrame};
use crate::monitor::{format_event_log, process_stream, summarize, MonitorEvent, MonitorSummary};

fn default_shapes(cfg: &RunConfig) -> (usize, usize, usize, usize) {
    (cfg.camera.rows, cfg.camera.cols, cfg.model.lidar_len, cfg.horizon)
}

/// Simulates `cfg.simulation.episodes` drives and writes them to `out`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<String> {
    let episodes = simulate_episodes(&cfg.world, &cfg.episode, cfg.simulation.episodes, cfg.seed)?;
    let frames: Vec<ObservationFrame> = episodes.into_iter().flatten().collect();
    let header = DatasetHeader::for_frames(&frames, default_shapes(cfg))?;
    save_dataset(out, &frames, &header)?;
    let anomalous = frames.iter().filter(|f| f.is_anomalous()).count();
    let failures = frames.iter().filter(|f| f.flags.failed).count();
    Ok(format!(
        "wrote {} frames from {} episodes to {}\nanomalous frames: {} ({:.1}%)\nfailures: {}\n",
        frames.len(),
        cfg.simulation.episodes,
        out.display(),
        anomalous,
        100.0 * anomalous as f64 / frames.len().max(1) as f64,
        failures
    ))
}

fn evaluate(model: &Paad<f32>, frames: &[PreparedFrame], name: &str, cfg: &RunConfig) -> Result<MetricsReport> {
    let preds = predict_all(model, frames, cfg.eval.batch_size)?;
    let labels: Vec<u8> = frames.iter().flat_map(|f| f.labels.iter().copied()).collect();
    MetricsReport::from_predictions(name, frames.len(), &preds, &labels, cfg.monitor.gamma, cfg.eval.kde_grid)
}

/// Trains on the non-held-out episodes of `dataset`, optionally resuming
/// from `resume`, and writes the checkpoint to `out`.
pub fn cmd_train(cfg: &RunConfig, dataset: &Path, resume: Option<&Path>, out: &Path) -> Result<(String, TrainLog)> {
    let (_, frames) = load_dataset(dataset)?;
    let mut model = match resume {
        Some(p) => {
            let m = load_checkpoint(p)?;
            if m.config() != &cfg.model {
                return Err(PaadError::Config(format!(
                    "checkpoint {} was trained with a different model configuration",
                    p.display()
                )));
            }
            m
        }
        None => Paad::<f32>::new(cfg.model.clone())?,
    };
    let prepared = prepare_all(&frames, &cfg.model)?;
    let (train_idx, val_idx) = split_by_episode(&frames, cfg.train.validation_fraction, cfg.seed);
    let train: Vec<PreparedFrame> = train_idx.iter().map(|&i| prepared[i].clone()).collect();
    let val: Vec<PreparedFrame> = val_idx.iter().map(|&i| prepared[i].clone()).collect();

    let mut text = String::new();
    let log = train_model(&mut model, &train, &cfg.train, |e| {
        let _ = writeln!(
            text,
            "epoch {:>3}  steps {:>5}  bce {:.4}  recon {:.3}  kl {:.3}  total {:.3}  ({:.1}s)",
            e.epoch, e.steps, e.loss.mean_bce, e.loss.recon_nll, e.loss.kl, e.loss.total, e.seconds
        );
    })?;
    if let Some(r) = &log.stop_reason {
        let _ = writeln!(text, "stopped: {r}");
    }
    save_checkpoint(&model, out)?;
    let _ = writeln!(text, "trained on {} frames in {:.1}s, checkpoint {}", train.len(), log.seconds, out.display());
    if !val.is_empty() {
        let r = evaluate(&model, &val, "validation", cfg)?;
        let _ = writeln!(
            text,
            "validation: {} frames  F1 {:.3}  PR-AUC {:.3}",
            r.frames, r.f1.f1, r.pr_auc
        );
    }
    Ok((text, log))
}

fn variant_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Evaluates every checkpoint on `dataset`; reports go to `out` as JSON.
pub fn cmd_eval(cfg: &RunConfig, checkpoints: &[PathBuf], dataset: &Path, out: &Path) -> Result<(String, Vec<MetricsReport>)> {
    if checkpoints.is_empty() {
        return Err(PaadError::Input("eval needs at least one checkpoint".into()));
    }
    let (_, frames) = load_dataset(dataset)?;
    let mut reports = Vec::new();
    let mut text = format!("{:<24} {:>7} {:>7} {:>7} {:>7}\n", "variant", "F1", "prec", "recall", "PR-AUC");
    for ck in checkpoints {
        let model = load_checkpoint(ck)?;
        let prepared = prepare_all(&frames, model.config())?;
        let r = evaluate(&model, &prepared, &variant_name(ck), cfg)?;
        let _ = writeln!(
            text,
            "{:<24} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            r.variant, r.f1.f1, r.f1.precision, r.f1.recall, r.pr_auc
        );
        reports.push(r);
    }
    let json = serde_json::to_string_pretty(&reports)
        .map_err(|e| PaadError::Format(format!("cannot encode report: {e}")))?;
    fs::write(out, json)?;
    Ok((text, reports))
}

/// Replays `dataset` through the monitor, one stream per episode, and
/// writes the event log to `out`.
pub fn cmd_monitor(cfg: &RunConfig, checkpoint: &Path, dataset: &Path, out: &Path) -> Result<(String, MonitorSummary)> {
    let model = load_checkpoint(checkpoint)?;
    let (_, frames) = load_dataset(dataset)?;
    let mut events: Vec<MonitorEvent> = Vec::with_capacity(frames.len());
    let mut max_latency = std::time::Duration::ZERO;
    let mut total = std::time::Duration::ZERO;
    let mut start = 0;
    while start < frames.len() {
        let ep = frames[start].episode;
        let end = start + frames[start..].iter().take_while(|f| f.episode == ep).count();
        let log = process_stream(&frames[start..end], &model, &cfg.monitor)?;
        max_latency = max_latency.max(log.max_latency);
        total += log.total_time;
        events.extend(log.events);
        start = end;
    }
    fs::write(out, format_event_log(&events))?;
    let anomalous: Vec<bool> = frames.iter().map(|f| f.is_anomalous()).collect();
    let s = summarize(&events, &anomalous)?;
    let fps = frames.len() as f64 / total.as_secs_f64().max(1e-9);
    let text = format!(
        "frames {}  alerts {}  anomaly windows {}  detected {}  false detections {}\n\
         throughput {:.1} fps  max latency {:.1} ms (budget {:.1} ms)\n",
        s.frames,
        s.alerts,
        s.anomaly_windows,
        s.anomalies_detected,
        s.false_detections,
        fps,
        max_latency.as_secs_f64() * 1e3,
        cfg.monitor.frame_budget().as_secs_f64() * 1e3
    );
    Ok((text, s))
}

/// Writes the PR curve and score densities of each report as CSV files
/// `<variant>_pr.csv` and `<variant>_kde.csv` into directory `out`.
pub fn cmd_plot(report: &Path, out: &Path) -> Result<String> {
    let text = fs::read_to_string(report)?;
    let reports: Vec<MetricsReport> = serde_json::from_str(&text)
        .map_err(|e| PaadError::Format(format!("{}: {e}", report.display())))?;
    fs::create_dir_all(out)?;
    let mut summary = String::new();
    for r in &reports {
        let mut pr = String::from("threshold,precision,recall\n");
        for p in &r.pr_curve.points {
            let _ = writeln!(pr, "{},{},{}", p.threshold, p.precision, p.recall);
        }
        let pr_path = out.join(format!("{}_pr.csv", r.variant));
        fs::write(&pr_path, pr)?;

        let mut kde = String::from("pool,logit,density\n");
        for (pool, d) in [("normal", &r.kde_normal), ("failure", &r.kde_failure)] {
            if let Some(d) = d {
                for (x, y) in d.grid.iter().zip(&d.density) {
                    let _ = writeln!(kde, "{pool},{x},{y}");
                }
            }
        }
        let kde_path = out.join(format!("{}_kde.csv", r.variant));
        fs::write(&kde_path, kde)?;
        let _ = writeln!(summary, "{}: {} and {}", r.variant, pr_path.display(), kde_path.display());
    }
    Ok(summary)
}
