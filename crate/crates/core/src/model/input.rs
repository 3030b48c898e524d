//! Conversion of recorded frames into network tensors.

use super::config::{PaadConfig, PathView};
use super::network::{FailureProfile, NetworkInput, Paad};
use crate::diffcore::{Real, Tensor};
use crate::error::{PaadError, Result};
use crate::fieldsim::{ObservationFrame, LIDAR_MAX_RANGE};
use crate::geometry::{crop_roi, project_bev, project_path, PathImage, PlannedPath};

/// Ranges clipped to `[0, 10]` m and divided by 10.
pub fn normalize_lidar(ranges: &[f32]) -> Vec<f32> {
    let max = LIDAR_MAX_RANGE as f32;
    ranges.iter().map(|&r| r.clamp(0.0, max) / max).collect()
}

/// Path raster in the layout the path CNN expects.
pub fn path_raster(path: &PlannedPath, cfg: &PaadConfig) -> Result<PathImage> {
    match cfg.path_view {
        PathView::Front => crop_roi(&project_path(path, &cfg.camera)?),
        PathView::Bev => Ok(project_bev(path, cfg.bev_scale, cfg.bev_grid)),
    }
}

/// A frame reduced to exactly what the network consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedFrame {
    pub image: Vec<u8>,
    /// Normalized ranges.
    pub lidar: Vec<f32>,
    /// Binary path raster (0/1).
    pub path: Vec<u8>,
    pub labels: Vec<u8>,
}

impl PreparedFrame {
    pub fn is_anomalous(&self) -> bool {
        self.labels.iter().any(|&l| l == 1)
    }
}

pub fn prepare_frame(frame: &ObservationFrame, cfg: &PaadConfig) -> Result<PreparedFrame> {
    if (frame.image.rows, frame.image.cols) != (cfg.image_rows, cfg.image_cols) {
        return Err(PaadError::Dimension(format!(
            "frame image is {}x{}, model expects {}x{}",
            frame.image.rows, frame.image.cols, cfg.image_rows, cfg.image_cols
        )));
    }
    if frame.lidar.len() != cfg.lidar_len {
        return Err(PaadError::Dimension(format!(
            "frame has {} LiDAR beams, model expects {}",
            frame.lidar.len(),
            cfg.lidar_len
        )));
    }
    if frame.labels.len() != cfg.horizon {
        return Err(PaadError::Dimension(format!(
            "frame has {} labels, horizon is {}",
            frame.labels.len(),
            cfg.horizon
        )));
    }
    frame.path.validate(cfg.horizon)?;
    let raster = path_raster(&frame.path, cfg)?;
    Ok(PreparedFrame {
        image: frame.image.pixels.clone(),
        lidar: normalize_lidar(&frame.lidar),
        path: raster.pixels.iter().map(|&p| (p != 0) as u8).collect(),
        labels: frame.labels.clone(),
    })
}

/// Stacks prepared frames into a batch; inactive sensors are left out.
pub fn assemble_batch<F: Real>(
    frames: &[&PreparedFrame],
    cfg: &PaadConfig,
    noise: Option<Tensor<F>>,
) -> Result<NetworkInput<F>> {
    let b = frames.len();
    if b == 0 {
        return Err(PaadError::Input("empty batch".into()));
    }
    let (pr, pc) = cfg.path_input_hw()?;
    let paths = Tensor::from_vec(
        &[b, 1, pr, pc],
        frames
            .iter()
            .flat_map(|f| f.path.iter().map(|&p| F::c(p as f64)))
            .collect(),
    )?;
    let images = if cfg.uses_camera() {
        Some(Tensor::from_vec(
            &[b, 1, cfg.image_rows, cfg.image_cols],
            frames
                .iter()
                .flat_map(|f| f.image.iter().map(|&p| F::c(p as f64 / 255.0)))
                .collect(),
        )?)
    } else {
        None
    };
    let lidar = if cfg.uses_lidar() {
        Some(lidar_tensor(frames, cfg)?)
    } else {
        None
    };
    Ok(NetworkInput {
        images,
        lidar,
        paths,
        noise,
    })
}

/// Normalized scans `[B, L]`, also the reconstruction targets.
pub fn lidar_tensor<F: Real>(frames: &[&PreparedFrame], cfg: &PaadConfig) -> Result<Tensor<F>> {
    Tensor::from_vec(
        &[frames.len(), cfg.lidar_len],
        frames
            .iter()
            .flat_map(|f| f.lidar.iter().map(|&r| F::c(r as f64)))
            .collect(),
    )
}

pub fn batch_labels(frames: &[&PreparedFrame]) -> Vec<u8> {
    frames.iter().flat_map(|f| f.labels.iter().copied()).collect()
}

impl<F: Real> Paad<F> {
    /// Failure profile of a single recorded frame (inference mode).
    pub fn predict_frame(&self, frame: &ObservationFrame) -> Result<FailureProfile> {
        let prepared = prepare_frame(frame, self.config())?;
        self.predict_prepared(&prepared)
    }

    pub fn predict_prepared(&self, frame: &PreparedFrame) -> Result<FailureProfile> {
        let input = assemble_batch::<F>(&[frame], self.config(), None)?;
        Ok(self.predict(&input)?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldsim::{run_episode, EpisodeConfig, WorldConfig};

    #[test]
    fn lidar_normalization_clips() {
        assert_eq!(normalize_lidar(&[-1.0, 0.0, 5.0, 10.0, 12.0]), vec![0.0, 0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn prepared_frame_shapes() {
        let ep = EpisodeConfig {
            frames: 3,
            ..EpisodeConfig::default()
        };
        let frames = run_episode(&WorldConfig::default(), &ep, 0).unwrap();
        let cfg = PaadConfig::default();
        let p = prepare_frame(&frames[0], &cfg).unwrap();
        assert_eq!(p.path.len(), 30 * 80);
        assert!(p.path.iter().any(|&v| v == 1));
        let bev = PaadConfig {
            path_view: PathView::Bev,
            ..PaadConfig::default()
        };
        assert_eq!(prepare_frame(&frames[0], &bev).unwrap().path.len(), bev.bev_grid * bev.bev_grid);
        let batch = assemble_batch::<f32>(&[&p, &p], &cfg, None).unwrap();
        assert_eq!(batch.paths.shape(), &[2, 1, 30, 80]);
        assert_eq!(batch.lidar.unwrap().shape(), &[2, 1081]);
    }
}
