//! TOML run configuration shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::error::{config_err, PaadError, Result};
use crate::fieldsim::{EpisodeConfig, WorldConfig};
use crate::geometry::CameraModel;
use crate::monitor::MonitorConfig;
use crate::model::PaadConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub episodes: usize,
    pub frames_per_episode: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            episodes: 10,
            frames_per_episode: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub kde_grid: usize,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            kde_grid: 200,
            batch_size: 64,
        }
    }
}

/// Optional default file locations; command-line arguments take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

/// Everything a command needs. `camera` and `horizon` are authoritative and
/// are copied into the model and episode sections by [`RunConfig::synced`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon: usize,
    pub camera: CameraModel,
    pub model: PaadConfig,
    pub world: WorldConfig,
    pub episode: EpisodeConfig,
    pub simulation: SimulationConfig,
    pub train: TrainConfig,
    pub monitor: MonitorConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            horizon: 10,
            camera: CameraModel::default(),
            model: PaadConfig::default(),
            world: WorldConfig::default(),
            episode: EpisodeConfig::default(),
            simulation: SimulationConfig::default(),
            train: TrainConfig::default(),
            monitor: MonitorConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| PaadError::Config(format!("invalid TOML: {e}")))?;
        let cfg = cfg.synced();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PaadError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PaadError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Propagates the shared camera, horizon and frame count.
    pub fn synced(mut self) -> Self {
        self.model.camera = self.camera;
        self.model.image_rows = self.camera.rows;
        self.model.image_cols = self.camera.cols;
        self.model.horizon = self.horizon;
        self.episode.camera = self.camera;
        self.episode.horizon = self.horizon;
        self.episode.frames = self.simulation.frames_per_episode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return config_err("horizon must be positive");
        }
        self.camera.validate()?;
        self.model.validate()?;
        self.world.validate()?;
        self.train.validate()?;
        self.monitor.validate()?;
        if !(self.episode.frame_rate > 0.0) {
            return config_err("frame_rate must be positive");
        }
        if self.eval.kde_grid < 2 || self.eval.batch_size == 0 {
            return config_err("eval needs kde_grid >= 2 and a positive batch size");
        }
        for p in [&self.paths.dataset, &self.paths.checkpoint].into_iter().flatten() {
            if !p.exists() {
                return config_err(format!("configured file {} does not exist", p.display()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default().synced());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.seed = 9;
        cfg.train.epochs = 3;
        cfg.model.reconstruction = false;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg.synced());
    }

    #[test]
    fn camera_propagates() {
        let cfg = RunConfig::from_toml("[camera]\nfocal = 20.0\nprincipal_row = 15.0\nprincipal_col = 20.0\nheight = 0.3\npitch = 0.0\nrows = 30\ncols = 40\n").unwrap();
        assert_eq!((cfg.model.image_rows, cfg.model.image_cols), (30, 40));
        assert_eq!(cfg.episode.camera.rows, 30);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(RunConfig::from_toml("horizon = 0"), Err(PaadError::Config(_))));
        assert!(RunConfig::from_toml("[monitor]\ngamma = 1.5").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[paths]\ndataset = \"/nonexistent/x.bin\"").is_err());
    }
}
