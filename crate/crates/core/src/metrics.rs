//! Offline evaluation over the flattened (frame, horizon step) pool.

use serde::{Deserialize, Serialize};

use crate::error::{PaadError, Result};

/// Thresholded precision / recall / F1 (positive iff `p > 0.5`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub undefined: bool,
}

fn check_pairs(preds: &[f64], labels: &[u8]) -> Result<()> {
    if preds.is_empty() {
        return Err(PaadError::Input("no predictions".into()));
    }
    if preds.len() != labels.len() {
        return Err(PaadError::Dimension(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(PaadError::Input("labels must be 0 or 1".into()));
    }
    if preds.iter().any(|p| !p.is_finite()) {
        return Err(PaadError::Input("non-finite prediction".into()));
    }
    Ok(())
}

fn ratio(num: usize, den: usize, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_at_half(preds: &[f64], labels: &[u8]) -> Result<F1Score> {
    check_pairs(preds, labels)?;
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (&p, &y) in preds.iter().zip(labels) {
        match (p > 0.5, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let mut undefined = false;
    let precision = ratio(tp, tp + fp, &mut undefined);
    let recall = ratio(tp, tp + fneg, &mut undefined);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined = true;
        0.0
    };
    Ok(F1Score {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
        undefined,
    })
}

/// Operating point for "positive iff score ≥ threshold".
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct score, thresholds descending, plus average precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub auc: f64,
}

/// Average precision `Σ (R_k − R_{k−1}) · P_k` over distinct thresholds;
/// equal scores enter together.
pub fn pr_auc(preds: &[f64], labels: &[u8]) -> Result<PrCurve> {
    check_pairs(preds, labels)?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(PaadError::Input(
            "PR-AUC needs at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].total_cmp(&preds[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = preds[order[i]];
        while i < order.len() && preds[order[i]] == t {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / positives as f64;
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint {
            threshold: t,
            precision,
            recall,
        });
    }
    Ok(PrCurve { points, auc })
}

/// Density on `(0, 1)` sampled at the midpoints `(i + 0.5) / n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Kernel bandwidth in logit space.
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Midpoint-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() / self.grid.len() as f64
    }

    pub fn mode(&self) -> f64 {
        let k = self
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k);
        self.grid[k]
    }
}

pub const KDE_CLAMP: f64 = 1e-6;
/// Smallest logit-space bandwidth.
pub const KDE_MIN_BANDWIDTH: f64 = 1e-3;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Silverman's rule `0.9 · min(std, IQR/1.34) · n^(-1/5)`, falling back to
/// whichever spread is non-zero and finally to [`KDE_MIN_BANDWIDTH`].
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let std = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let iqr = (quantile(0.75) - quantile(0.25)) / 1.34;
    let spread = match (std > 0.0, iqr > 0.0) {
        (true, true) => std.min(iqr),
        (true, false) => std,
        (false, true) => iqr,
        (false, false) => 0.0,
    };
    (0.9 * spread * n.powf(-0.2)).max(KDE_MIN_BANDWIDTH)
}

/// Gaussian KDE on bounded support: samples are mapped to logit space,
/// smoothed there, and mapped back with the Jacobian `1 / (x (1 − x))`.
/// The result is normalized so the grid integral is 1.
pub fn kde_bounded(samples: &[f64], grid_size: usize) -> Result<DensityEstimate> {
    if samples.len() < 2 {
        return Err(PaadError::Input(format!(
            "density estimate needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if grid_size == 0 {
        return Err(PaadError::Input("grid size must be positive".into()));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(PaadError::Input("non-finite sample".into()));
    }
    let z: Vec<f64> = samples
        .iter()
        .map(|&s| logit(s.clamp(KDE_CLAMP, 1.0 - KDE_CLAMP)))
        .collect();
    let h = silverman_bandwidth(&z);
    let grid: Vec<f64> = (0..grid_size)
        .map(|i| (i as f64 + 0.5) / grid_size as f64)
        .collect();
    // Log domain so far-away samples cannot underflow the whole grid.
    let log_density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let u = logit(x);
            let terms: Vec<f64> = z.iter().map(|&zi| -0.5 * ((u - zi) / h).powi(2)).collect();
            let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
            lse - (x * (1.0 - x)).ln()
        })
        .collect();
    let peak = log_density.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_density.iter().map(|l| (l - peak).exp()).collect();
    let mass = raw.iter().sum::<f64>() / grid_size as f64;
    Ok(DensityEstimate {
        density: raw.into_iter().map(|d| d / mass).collect(),
        grid,
        bandwidth: h,
    })
}

/// Evaluation summary of one model on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub frames: usize,
    /// Flattened (frame, step) pairs.
    pub pairs: usize,
    pub positive_pairs: usize,
    pub f1: F1Score,
    pub pr_auc: f64,
    pub pr_curve: PrCurve,
    /// Score densities of the normal and failure pools.
    pub kde_normal: Option<DensityEstimate>,
    pub kde_failure: Option<DensityEstimate>,
    /// Monitor discount factor in force for this run.
    pub gamma: f64,
}

impl MetricsReport {
    pub fn from_predictions(
        variant: impl Into<String>,
        frames: usize,
        preds: &[f64],
        labels: &[u8],
        gamma: f64,
        grid_size: usize,
    ) -> Result<Self> {
        let f1 = f1_at_half(preds, labels)?;
        let pr_curve = pr_auc(preds, labels)?;
        let pool = |want: u8| -> Vec<f64> {
            preds
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == want)
                .map(|(&p, _)| p)
                .collect()
        };
        let (normal, failure) = (pool(0), pool(1));
        let kde = |s: &[f64]| (s.len() >= 2).then(|| kde_bounded(s, grid_size)).transpose();
        Ok(MetricsReport {
            variant: variant.into(),
            frames,
            pairs: preds.len(),
            positive_pairs: failure.len(),
            f1,
            pr_auc: pr_curve.auc,
            pr_curve,
            kde_normal: kde(&normal)?,
            kde_failure: kde(&failure)?,
            gamma,
        })
    }
}
