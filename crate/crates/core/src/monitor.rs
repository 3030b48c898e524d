//! Streaming anomaly monitor: discounted score over the failure profile and
//! an N-consecutive trigger.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, PaadError, Result};
use crate::fieldsim::ObservationFrame;
use crate::model::Paad;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    /// Discount over the horizon, in `(0, 1]`.
    pub gamma: f64,
    pub threshold: f64,
    pub consecutive_required: u32,
    /// Processing rate contract (Hz).
    pub rate_hz: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            gamma: 0.9,
            threshold: 0.5,
            consecutive_required: 3,
            rate_hz: 10.0,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return config_err(format!("gamma {} must lie in (0, 1]", self.gamma));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return config_err(format!("threshold {} must lie in (0, 1)", self.threshold));
        }
        if self.consecutive_required == 0 {
            return config_err("consecutive_required must be at least 1");
        }
        if !(self.rate_hz > 0.0) {
            return config_err("rate must be positive");
        }
        Ok(())
    }

    /// Per-frame latency budget implied by the rate.
    pub fn frame_budget(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.rate_hz)
    }
}

/// `Σ_{k<T} γ^k`.
pub fn discount_sum(horizon: usize, gamma: f64) -> f64 {
    let mut w = 1.0;
    let mut s = 0.0;
    for _ in 0..horizon {
        s += w;
        w *= gamma;
    }
    s
}

/// Normalizer `β = 1 / Σ γ^k`.
pub fn beta(horizon: usize, gamma: f64) -> f64 {
    1.0 / discount_sum(horizon, gamma)
}

/// `s = β Σ γ^k y_k`, computed as a ratio so an all-ones profile scores exactly 1.
pub fn anomaly_score(profile: &[f64], gamma: f64) -> Result<f64> {
    if profile.is_empty() {
        return Err(PaadError::Input("empty failure profile".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return config_err(format!("gamma {gamma} must lie in (0, 1]"));
    }
    let mut w = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for &y in profile {
        num += w * y;
        den += w;
        w *= gamma;
    }
    Ok(num / den)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MonitorState {
    /// Consecutive scores above the threshold.
    pub run: u32,
    pub last_score: Option<f64>,
    /// Whether the current run already raised its alert.
    pub alerted: bool,
}

/// Advances the trigger; returns true exactly when the run reaches the
/// required length. Further exceedances are silent until a reset.
pub fn step(state: MonitorState, score: f64, cfg: &MonitorConfig) -> (MonitorState, bool) {
    let mut next = MonitorState {
        last_score: Some(score),
        ..state
    };
    if score > cfg.threshold {
        next.run = state.run.saturating_add(1);
    } else {
        next.run = 0;
        next.alerted = false;
    }
    let alert = next.run == cfg.consecutive_required && !state.alerted;
    if alert {
        next.alerted = true;
    }
    (next, alert)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorEvent {
    pub timestamp: f64,
    pub score: f64,
    pub alert: bool,
}

/// Stateful monitor for one stream.
#[derive(Clone, Debug)]
pub struct Monitor {
    pub config: MonitorConfig,
    pub state: MonitorState,
    last_timestamp: Option<f64>,
}

impl Monitor {
    pub fn new(config: MonitorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Monitor {
            config,
            state: MonitorState::default(),
            last_timestamp: None,
        })
    }

    pub fn observe(&mut self, timestamp: f64, profile: &[f64]) -> Result<MonitorEvent> {
        if !timestamp.is_finite() {
            return Err(PaadError::Stream(format!("non-finite timestamp {timestamp}")));
        }
        if let Some(prev) = self.last_timestamp {
            if timestamp < prev {
                return Err(PaadError::Stream(format!(
                    "timestamp {timestamp} arrives after {prev}"
                )));
            }
        }
        let score = anomaly_score(profile, self.config.gamma)?;
        let (state, alert) = step(self.state, score, &self.config);
        self.state = state;
        self.last_timestamp = Some(timestamp);
        Ok(MonitorEvent {
            timestamp,
            score,
            alert,
        })
    }

    /// Starts a new stream (e.g. a new episode).
    pub fn reset(&mut self) {
        self.state = MonitorState::default();
        self.last_timestamp = None;
    }
}

/// Events plus the slowest per-frame latency observed.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamLog {
    pub events: Vec<MonitorEvent>,
    pub max_latency: Duration,
    pub total_time: Duration,
}

/// predict → score → trigger for each frame, in order.
pub fn process_stream<'a>(
    frames: impl IntoIterator<Item = &'a ObservationFrame>,
    model: &Paad<f32>,
    cfg: &MonitorConfig,
) -> Result<StreamLog> {
    let mut monitor = Monitor::new(*cfg)?;
    let mut events = Vec::new();
    let mut max_latency = Duration::ZERO;
    let start = Instant::now();
    for frame in frames {
        let t0 = Instant::now();
        let profile = model.predict_frame(frame)?;
        events.push(monitor.observe(frame.timestamp, &profile.probs)?);
        max_latency = max_latency.max(t0.elapsed());
    }
    Ok(StreamLog {
        events,
        max_latency,
        total_time: start.elapsed(),
    })
}

/// `timestamp,score,alert` lines; score to 6 decimals, alert as 0/1.
pub fn format_event_log(events: &[MonitorEvent]) -> String {
    let mut out = String::new();
    for e in events {
        let _ = writeln!(out, "{},{:.6},{}", e.timestamp, e.score, e.alert as u8);
    }
    out
}

pub fn parse_event_log(text: &str) -> Result<Vec<MonitorEvent>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || PaadError::Format(format!("event log line {}: {line:?}", i + 1));
            let mut parts = line.split(',');
            let timestamp = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let score = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let alert = match parts.next() {
                Some("1") => true,
                Some("0") => false,
                _ => return Err(bad()),
            };
            if parts.next().is_some() {
                return Err(bad());
            }
            Ok(MonitorEvent {
                timestamp,
                score,
                alert,
            })
        })
        .collect()
}

/// Detection counts against labelled anomaly windows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub frames: usize,
    pub alerts: usize,
    /// Maximal runs of consecutive anomalous frames.
    pub anomaly_windows: usize,
    /// Windows containing at least one alert.
    pub anomalies_detected: usize,
    /// Alerts on frames outside every window.
    pub false_detections: usize,
}

/// `anomalous[i]` marks frame `i` as inside an anomaly window.
pub fn summarize(events: &[MonitorEvent], anomalous: &[bool]) -> Result<MonitorSummary> {
    if events.len() != anomalous.len() {
        return Err(PaadError::Dimension(format!(
            "{} events vs {} frame labels",
            events.len(),
            anomalous.len()
        )));
    }
    let mut s = MonitorSummary {
        frames: events.len(),
        ..MonitorSummary::default()
    };
    let mut in_window = false;
    let mut window_hit = false;
    for (e, &a) in events.iter().zip(anomalous) {
        if a && !in_window {
            s.anomaly_windows += 1;
            window_hit = false;
        }
        if !a && in_window && window_hit {
            s.anomalies_detected += 1;
        }
        in_window = a;
        if e.alert {
            s.alerts += 1;
            if a {
                window_hit = true;
            } else {
                s.false_detections += 1;
            }
        }
    }
    if in_window && window_hit {
        s.anomalies_detected += 1;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alerts(scores: &[f64]) -> Vec<bool> {
        let cfg = MonitorConfig::default();
        let mut st = MonitorState::default();
        scores
            .iter()
            .map(|&s| {
                let (n, a) = step(st, s, &cfg);
                st = n;
                a
            })
            .collect()
    }

    #[test]
    fn score_reference_values() {
        let profile = [0.2, 0.4, 0.6, 0.8];
        assert!((anomaly_score(&profile, 1.0).unwrap() - 0.5).abs() < 1e-15);
        for g in [0.3, 0.9, 1.0] {
            assert_eq!(anomaly_score(&[1.0; 10], g).unwrap(), 1.0);
            assert_eq!(anomaly_score(&[0.0; 10], g).unwrap(), 0.0);
        }
        let mut first = [0.0; 10];
        first[0] = 1.0;
        let want = (1.0 - 0.9) / (1.0 - 0.9f64.powi(10));
        assert!((anomaly_score(&first, 0.9).unwrap() - want).abs() < 1e-12);
        assert!(anomaly_score(&[], 0.9).is_err());
        assert!(anomaly_score(&[0.5], 0.0).is_err());
    }

    #[test]
    fn trigger_reference_traces() {
        assert_eq!(alerts(&[0.6, 0.6, 0.6]), [false, false, true]);
        assert_eq!(
            alerts(&[0.6, 0.6, 0.4, 0.6, 0.6, 0.6]),
            [false, false, false, false, false, true]
        );
        assert!(alerts(&[0.5; 20]).iter().all(|a| !a));
        // Long exceedance alerts once.
        assert_eq!(alerts(&[0.9; 8]).iter().filter(|&&a| a).count(), 1);
    }

    #[test]
    fn out_of_order_timestamps_are_stream_errors() {
        let mut m = Monitor::new(MonitorConfig::default()).unwrap();
        m.observe(1.0, &[0.1]).unwrap();
        assert!(matches!(m.observe(0.5, &[0.1]), Err(PaadError::Stream(_))));
    }

    #[test]
    fn event_log_round_trip() {
        let events = vec![
            MonitorEvent { timestamp: 0.0, score: 0.25, alert: false },
            MonitorEvent { timestamp: 0.333, score: 0.75, alert: true },
        ];
        let text = format_event_log(&events);
        assert_eq!(text, "0,0.250000,0\n0.333,0.750000,1\n");
        assert_eq!(parse_event_log(&text).unwrap(), events);
    }

    #[test]
    fn summary_counts_windows() {
        let ev = |alert| MonitorEvent { timestamp: 0.0, score: 0.0, alert };
        let events = [ev(false), ev(true), ev(false), ev(true), ev(false), ev(false)];
        let anomalous = [false, true, true, false, true, true];
        let s = summarize(&events, &anomalous).unwrap();
        assert_eq!(s.anomaly_windows, 2);
        assert_eq!(s.anomalies_detected, 1);
        assert_eq!(s.false_detections, 1);
        assert_eq!(s.alerts, 2);
    }
}
