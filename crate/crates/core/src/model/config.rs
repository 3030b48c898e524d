use serde::{Deserialize, Serialize};

use crate::diffcore::block_output_hw;
use crate::error::{config_err, Result};
use crate::geometry::CameraModel;

/// Which sensor tokens feed the fusion module.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    Both,
    LidarOnly,
    CameraOnly,
}

/// Camera/LiDAR token mixing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    /// Residual multi-head self-attention.
    #[default]
    Mha,
    /// Two-layer MLP in place of the residual attention block.
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PathView {
    #[default]
    Front,
    Bev,
}

/// Architecture and ablation switches of the detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PaadConfig {
    /// Prediction horizon (number of waypoints / output probabilities).
    pub horizon: usize,
    /// Latent dimension of the LiDAR posterior.
    pub latent_dim: usize,
    /// Token dimension entering the fusion module.
    pub token_dim: usize,
    pub heads: usize,
    /// Hidden units of the camera projection.
    pub image_fc_hidden: usize,
    /// Hidden units of the LiDAR encoder / decoder.
    pub lidar_hidden: usize,
    /// Hidden units of the fusion head (output layer has `horizon` units).
    pub fusion_hidden: usize,
    /// Filters of the three conv layers in each image pipeline.
    pub conv_filters: Vec<usize>,
    /// Whether each conv layer is followed by 2x2 max pooling.
    pub conv_pool: Vec<bool>,
    pub conv_stride: usize,
    pub fusion_mode: FusionMode,
    pub attention: AttentionKind,
    pub reconstruction: bool,
    pub path_view: PathView,
    pub image_rows: usize,
    pub image_cols: usize,
    pub lidar_len: usize,
    pub bev_grid: usize,
    pub bev_scale: f64,
    /// Path rasterization camera (front view).
    pub camera: CameraModel,
    pub init_seed: u64,
}

impl Default for PaadConfig {
    fn default() -> Self {
        PaadConfig {
            horizon: 10,
            latent_dim: 32,
            token_dim: 64,
            heads: 8,
            image_fc_hidden: 64,
            lidar_hidden: 128,
            fusion_hidden: 128,
            conv_filters: vec![8, 16, 32],
            conv_pool: vec![true, true, false],
            conv_stride: 2,
            fusion_mode: FusionMode::Both,
            attention: AttentionKind::Mha,
            reconstruction: true,
            path_view: PathView::Front,
            image_rows: 60,
            image_cols: 80,
            lidar_len: 1081,
            bev_grid: 40,
            bev_scale: 18.0,
            camera: CameraModel::for_resolution(60, 80),
            init_seed: 7,
        }
    }
}

impl PaadConfig {
    /// Miniature architecture (12x16 images, 40 beams, horizon 5) for
    /// fast numerical checks.
    pub fn compact() -> Self {
        PaadConfig {
            horizon: 5,
            latent_dim: 4,
            token_dim: 8,
            heads: 2,
            image_fc_hidden: 6,
            lidar_hidden: 10,
            fusion_hidden: 12,
            conv_filters: vec![2, 3, 4],
            conv_pool: vec![true, false, false],
            image_rows: 12,
            image_cols: 16,
            lidar_len: 40,
            bev_grid: 12,
            bev_scale: 5.0,
            camera: CameraModel::for_resolution(12, 16),
            ..PaadConfig::default()
        }
    }

    pub fn uses_camera(&self) -> bool {
        self.fusion_mode != FusionMode::LidarOnly
    }

    pub fn uses_lidar(&self) -> bool {
        self.fusion_mode != FusionMode::CameraOnly
    }

    /// Reconstruction branch is active only when the LiDAR pipeline is.
    pub fn trains_reconstruction(&self) -> bool {
        self.reconstruction && self.uses_lidar()
    }

    /// `(rows, cols)` of the path raster fed to the path CNN.
    pub fn path_input_hw(&self) -> Result<(usize, usize)> {
        match self.path_view {
            PathView::Front => {
                let (start, end) = self.camera.roi_rows()?;
                Ok((end - start, self.camera.cols))
            }
            PathView::Bev => Ok((self.bev_grid, self.bev_grid)),
        }
    }

    /// Flattened output length of the conv stack applied to `rows × cols`.
    pub fn conv_feature_len(&self, rows: usize, cols: usize) -> Result<usize> {
        let (mut h, mut w) = (rows, cols);
        for (layer, &pool) in self.conv_pool.iter().enumerate() {
            match block_output_hw(h, w, self.conv_stride, pool) {
                Some((nh, nw)) => (h, w) = (nh, nw),
                None => {
                    return config_err(format!(
                        "conv layer {layer} receives a {h}x{w} map, too small for a 3x3 kernel"
                    ))
                }
            }
        }
        Ok(self.conv_filters.last().copied().unwrap_or(0) * h * w)
    }

    pub fn path_feature_len(&self) -> Result<usize> {
        let (r, c) = self.path_input_hw()?;
        self.conv_feature_len(r, c)
    }

    pub fn camera_feature_len(&self) -> Result<usize> {
        self.conv_feature_len(self.image_rows, self.image_cols)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return config_err("horizon must be at least 1");
        }
        if self.latent_dim == 0 || self.token_dim == 0 {
            return config_err("latent and token dimensions must be positive");
        }
        if self.heads == 0 || self.token_dim % self.heads != 0 {
            return config_err(format!(
                "token dim {} is not divisible by {} heads",
                self.token_dim, self.heads
            ));
        }
        if self.uses_lidar() && 2 * self.latent_dim != self.token_dim {
            return config_err(format!(
                "LiDAR token [mu, sigma] has length {} but token dim is {} (no projection configured)",
                2 * self.latent_dim,
                self.token_dim
            ));
        }
        if self.conv_filters.len() != self.conv_pool.len() || self.conv_filters.is_empty() {
            return config_err("conv_filters and conv_pool must be non-empty and of equal length");
        }
        if self.lidar_len == 0 || self.image_rows == 0 || self.image_cols == 0 {
            return config_err("input resolutions must be positive");
        }
        self.camera.validate()?;
        if self.path_view == PathView::Front
            && (self.camera.rows, self.camera.cols) != (self.image_rows, self.image_cols)
        {
            return config_err(format!(
                "path camera is {}x{} but images are {}x{}",
                self.camera.rows, self.camera.cols, self.image_rows, self.image_cols
            ));
        }
        if self.path_view == PathView::Bev && (self.bev_grid == 0 || !(self.bev_scale > 0.0)) {
            return config_err("bird's-eye grid and scale must be positive");
        }
        self.path_feature_len()?;
        if self.uses_camera() {
            self.camera_feature_len()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = PaadConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.horizon, 10);
        assert_eq!(cfg.latent_dim, 32);
        assert_eq!(cfg.token_dim, 64);
        assert_eq!(cfg.heads, 8);
        assert_eq!(cfg.lidar_len, 1081);
    }

    #[test]
    fn default_feature_lengths() {
        // Camera 60x80: 30x40 → 15x20 → 8x10 → 4x5 → 2x3 (no final pool).
        // Path ROI 30x80: 15x40 → 7x20 → 4x10 → 2x5 → 1x3.
        let cfg = PaadConfig::default();
        assert_eq!(cfg.camera_feature_len().unwrap(), 32 * 2 * 3);
        assert_eq!(cfg.path_feature_len().unwrap(), 32 * 3);
    }

    #[test]
    fn mismatched_lidar_token_is_config_error() {
        let cfg = PaadConfig {
            latent_dim: 16,
            ..PaadConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cam_only = PaadConfig {
            latent_dim: 16,
            fusion_mode: FusionMode::CameraOnly,
            ..PaadConfig::default()
        };
        cam_only.validate().unwrap();
    }
}
