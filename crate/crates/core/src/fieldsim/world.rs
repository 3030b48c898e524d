use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rng_stream;
use crate::error::{config_err, Result};

/// Corn-row world and scenario parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Distance between the two crop rows (m).
    pub row_spacing: f64,
    pub stalk_radius: f64,
    /// Stalk spacing along a row (m).
    pub stalk_pitch: f64,
    pub stalk_height: f64,
    /// Probability that any single stalk is missing.
    pub gap_probability: f64,
    /// Expected clutter objects (weeds, debris) per metre of row.
    pub clutter_density: f64,
    pub clutter_radius: (f64, f64),
    pub clutter_height: (f64, f64),
    /// Per-frame probability of a near-field camera occlusion.
    pub camera_occlusion_probability: f64,
    /// Per-frame probability of a near-field LiDAR occlusion.
    pub lidar_occlusion_probability: f64,
    /// Per-frame probability that a heading-estimate corruption event starts.
    pub heading_corruption_probability: f64,
    /// Magnitude range of the corrupted heading bias (degrees).
    pub corruption_angle_deg: (f64, f64),
    /// Duration range of a corruption event (frames).
    pub corruption_frames: (u32, u32),
    /// Standard deviation of the row-relative heading estimate (degrees).
    pub heading_noise_deg: f64,
    /// Standard deviation of the row-relative lateral estimate (m).
    pub lateral_noise: f64,
    /// Standard deviation of the executed heading per step (degrees).
    pub drive_heading_noise_deg: f64,
    /// Minimum row length (m); episodes extend it to fit their frames.
    pub row_length: f64,
    pub robot_radius: f64,
    /// LiDAR scan plane height (m); lower clutter is invisible to it.
    pub lidar_height: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            row_spacing: 0.76,
            stalk_radius: 0.02,
            stalk_pitch: 0.15,
            stalk_height: 1.5,
            gap_probability: 0.05,
            clutter_density: 0.06,
            clutter_radius: (0.03, 0.06),
            clutter_height: (0.08, 0.45),
            camera_occlusion_probability: 0.2,
            lidar_occlusion_probability: 0.2,
            heading_corruption_probability: 0.02,
            corruption_angle_deg: (15.0, 35.0),
            corruption_frames: (3, 6),
            heading_noise_deg: 1.5,
            lateral_noise: 0.015,
            drive_heading_noise_deg: 2.0,
            row_length: 100.0,
            robot_radius: 0.15,
            lidar_height: 0.2,
            seed: 1,
        }
    }
}

impl WorldConfig {
    /// No noise, clutter, gaps, corruption or occlusion.
    pub fn clean(seed: u64) -> Self {
        WorldConfig {
            gap_probability: 0.0,
            clutter_density: 0.0,
            camera_occlusion_probability: 0.0,
            lidar_occlusion_probability: 0.0,
            heading_corruption_probability: 0.0,
            heading_noise_deg: 0.0,
            lateral_noise: 0.0,
            drive_heading_noise_deg: 0.0,
            seed,
            ..WorldConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("gap_probability", self.gap_probability),
            ("camera_occlusion_probability", self.camera_occlusion_probability),
            ("lidar_occlusion_probability", self.lidar_occlusion_probability),
            ("heading_corruption_probability", self.heading_corruption_probability),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return config_err(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.stalk_radius > 0.0) || !(self.row_spacing > 2.0 * self.stalk_radius) {
            return config_err(format!(
                "row spacing {} must exceed twice the stalk radius {}",
                self.row_spacing, self.stalk_radius
            ));
        }
        if !(self.stalk_pitch > 0.0) || !(self.row_length > 0.0) {
            return config_err("stalk pitch and row length must be positive");
        }
        if !(self.clutter_density >= 0.0) {
            return config_err("clutter density must be non-negative");
        }
        if self.clutter_radius.0 <= 0.0 || self.clutter_radius.0 > self.clutter_radius.1 {
            return config_err("clutter radius range must be positive and ordered");
        }
        if self.clutter_height.0 <= 0.0 || self.clutter_height.0 > self.clutter_height.1 {
            return config_err("clutter height range must be positive and ordered");
        }
        if self.corruption_frames.0 == 0 || self.corruption_frames.0 > self.corruption_frames.1 {
            return config_err("corruption frame range must be positive and ordered");
        }
        if self.corruption_angle_deg.0 > self.corruption_angle_deg.1 {
            return config_err("corruption angle range must be ordered");
        }
        if !(self.robot_radius > 0.0) || !(self.lidar_height > 0.0) {
            return config_err("robot radius and LiDAR height must be positive");
        }
        if self.heading_noise_deg < 0.0 || self.lateral_noise < 0.0 || self.drive_heading_noise_deg < 0.0 {
            return config_err("noise levels must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObstacleKind {
    Stalk,
    Clutter,
}

/// Vertical cylinder standing on the ground.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub height: f64,
    pub kind: ObstacleKind,
}

/// Two crop rows along the x-axis at `y = ±spacing/2`, plus clutter.
#[derive(Clone, Debug)]
pub struct World {
    pub config: WorldConfig,
    pub length: f64,
    /// Sorted by `x`.
    obstacles: Vec<Obstacle>,
}

impl World {
    /// Hand-built world; obstacles are sorted on entry.
    pub fn from_obstacles(config: WorldConfig, length: f64, mut obstacles: Vec<Obstacle>) -> Self {
        obstacles.sort_by(|a, b| a.x.total_cmp(&b.x));
        World {
            config,
            length,
            obstacles,
        }
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn half_spacing(&self) -> f64 {
        self.config.row_spacing / 2.0
    }

    /// Obstacles with `x` in `[lo, hi]`.
    pub fn obstacles_between(&self, lo: f64, hi: f64) -> &[Obstacle] {
        let start = self.obstacles.partition_point(|o| o.x < lo);
        let end = self.obstacles.partition_point(|o| o.x <= hi);
        &self.obstacles[start..end.max(start)]
    }

    pub fn stalk_count(&self) -> usize {
        self.obstacles
            .iter()
            .filter(|o| o.kind == ObstacleKind::Stalk)
            .count()
    }

    /// True when a robot disc centred at `(x, y)` touches an obstacle or
    /// has left the corridor between the rows.
    pub fn violates(&self, x: f64, y: f64) -> bool {
        if y.abs() > self.half_spacing() {
            return true;
        }
        let reach = self.config.robot_radius + self.config.clutter_radius.1.max(self.config.stalk_radius);
        self.obstacles_between(x - reach, x + reach)
            .iter()
            .any(|o| (o.x - x).hypot(o.y - y) < self.config.robot_radius + o.radius)
    }
}

/// World of the configured row length.
pub fn generate_world(cfg: &WorldConfig) -> Result<World> {
    generate_world_with_length(cfg, cfg.row_length)
}

pub fn generate_world_with_length(cfg: &WorldConfig, length: f64) -> Result<World> {
    cfg.validate()?;
    if !(length > 0.0) {
        return config_err("world length must be positive");
    }
    let mut rng: ChaCha8Rng = rng_stream(cfg.seed, 0);
    let half = cfg.row_spacing / 2.0;
    let per_row = (length / cfg.stalk_pitch).floor() as usize;
    let jitter = (cfg.stalk_pitch * 0.15).min(0.02);
    let mut obstacles = Vec::with_capacity(2 * per_row);
    for side in [-1.0, 1.0] {
        for i in 0..per_row {
            let jx = rng.random_range(-jitter..=jitter);
            let jy = rng.random_range(-jitter..=jitter);
            let missing = rng.random::<f64>() < cfg.gap_probability;
            if missing {
                continue;
            }
            obstacles.push(Obstacle {
                x: (i as f64 + 0.5) * cfg.stalk_pitch + jx,
                y: side * half + jy,
                radius: cfg.stalk_radius,
                height: cfg.stalk_height,
                kind: ObstacleKind::Stalk,
            });
        }
    }
    // Poisson-distributed clutter by thinning unit cells.
    let cells = (length * 10.0).ceil() as usize;
    let p_cell = (cfg.clutter_density / 10.0).min(1.0);
    let band = half + 0.3;
    for c in 0..cells {
        if rng.random::<f64>() >= p_cell {
            continue;
        }
        let x = (c as f64 + rng.random::<f64>()) / 10.0;
        obstacles.push(Obstacle {
            x,
            y: rng.random_range(-band..band),
            radius: rng.random_range(cfg.clutter_radius.0..=cfg.clutter_radius.1),
            height: rng.random_range(cfg.clutter_height.0..=cfg.clutter_height.1),
            kind: ObstacleKind::Clutter,
        });
    }
    obstacles.sort_by(|a, b| a.x.total_cmp(&b.x));
    Ok(World {
        config: cfg.clone(),
        length,
        obstacles,
    })
}
