use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::planner::{plan_path, PlannerConfig};
use super::sensors::{lidar_scan, occlude_camera, occlude_lidar, render_camera, GrayImage};
use super::world::{generate_world_with_length, World, WorldConfig};
use super::{rng_stream, Pose};
use crate::error::{config_err, Result};
use crate::geometry::{CameraModel, PlannedPath, WAYPOINT_SPACING};

/// Recording parameters of a drive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub frames: usize,
    pub horizon: usize,
    /// Frames per second.
    pub frame_rate: f64,
    pub planner: PlannerConfig,
    pub camera: CameraModel,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            frames: 600,
            horizon: 10,
            frame_rate: 3.0,
            planner: PlannerConfig::default(),
            camera: CameraModel::default(),
        }
    }
}

impl EpisodeConfig {
    /// Travel speed implied by one waypoint per frame (m/s).
    pub fn speed(&self) -> f64 {
        WAYPOINT_SPACING * self.frame_rate
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameFlags {
    pub camera_occluded: bool,
    pub lidar_occluded: bool,
    pub heading_corrupted: bool,
    /// The robot failed while executing this frame's plan and was reset.
    pub failed: bool,
}

/// One synchronized sample: sensors, plan and per-step failure labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationFrame {
    pub episode: u32,
    pub index: u32,
    /// Seconds since the start of the episode.
    pub timestamp: f64,
    pub image: GrayImage,
    pub lidar: Vec<f32>,
    pub path: PlannedPath,
    /// `labels[k] = 1` if a failure has occurred by waypoint `k`.
    pub labels: Vec<u8>,
    pub flags: FrameFlags,
    pub pose: Pose,
}

impl ObservationFrame {
    pub fn is_anomalous(&self) -> bool {
        self.labels.iter().any(|&l| l == 1)
    }
}

/// Per-step labels along a world-frame path; once set they stay set.
pub fn label_horizon(world: &World, path_world: &[(f64, f64)]) -> Vec<u8> {
    let mut failed = false;
    path_world
        .iter()
        .map(|&(x, y)| {
            failed = failed || world.violates(x, y);
            failed as u8
        })
        .collect()
}

/// Robot pose, estimator state and failure count while driving.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub pose: Pose,
    /// Remaining frames and heading bias (rad) of an active corruption event.
    pub corruption: Option<(u32, f64)>,
    pub failures: usize,
}

fn drive_margin(cfg: &EpisodeConfig) -> f64 {
    WAYPOINT_SPACING * (cfg.horizon as f64 + 20.0) + 12.0
}

/// The world `run_episode` drives through: the configured row, lengthened
/// when needed so every frame has obstacles ahead of it.
pub fn episode_world(world_cfg: &WorldConfig, cfg: &EpisodeConfig) -> Result<World> {
    let length = world_cfg
        .row_length
        .max(cfg.frames as f64 * WAYPOINT_SPACING * 1.2 + drive_margin(cfg));
    generate_world_with_length(world_cfg, length)
}

/// Drives one row, recording `cfg.frames` frames.
///
/// Independent random streams drive the world, the dynamics and each
/// sensor's occlusions, so toggling one occlusion source leaves everything
/// else bit-identical.
pub fn run_episode(world_cfg: &WorldConfig, cfg: &EpisodeConfig, episode: u32) -> Result<Vec<ObservationFrame>> {
    if cfg.horizon < 2 || cfg.frames == 0 || !(cfg.frame_rate > 0.0) {
        return config_err("episode needs a horizon of at least 2, frames and a positive frame rate");
    }
    cfg.camera.validate()?;
    let margin = drive_margin(cfg);
    let world = episode_world(world_cfg, cfg)?;

    let mut dyn_rng = rng_stream(world_cfg.seed, 1);
    let mut cam_rng = rng_stream(world_cfg.seed, 2);
    let mut lidar_rng = rng_stream(world_cfg.seed, 3);
    let gauss = |sd: f64| Normal::new(0.0, sd).expect("non-negative deviation");
    let lat_noise = gauss(world_cfg.lateral_noise);
    let head_noise = gauss(world_cfg.heading_noise_deg.to_radians());
    let drive_noise = gauss(world_cfg.drive_heading_noise_deg.to_radians());

    let mut state = RobotState {
        pose: Pose { x: 1.0, y: 0.0, heading: 0.0 },
        corruption: None,
        failures: 0,
    };
    reset_to_free(&world, &mut state.pose);

    let mut frames = Vec::with_capacity(cfg.frames);
    for index in 0..cfg.frames {
        if state.pose.x > world.length - margin {
            state.pose = Pose { x: 1.0, y: 0.0, heading: 0.0 };
            reset_to_free(&world, &mut state.pose);
        }
        let pose = state.pose;
        let mut flags = FrameFlags::default();

        if state.corruption.is_none() && dyn_rng.random::<f64>() < world_cfg.heading_corruption_probability {
            let (lo, hi) = world_cfg.corruption_angle_deg;
            let mag = if hi > lo { dyn_rng.random_range(lo..=hi) } else { lo };
            let sign = if dyn_rng.random::<bool>() { 1.0 } else { -1.0 };
            let (f0, f1) = world_cfg.corruption_frames;
            state.corruption = Some((dyn_rng.random_range(f0..=f1), sign * mag.to_radians()));
        }
        let bias = state.corruption.map_or(0.0, |(_, b)| b);
        flags.heading_corrupted = state.corruption.is_some();
        let est_lateral = state.pose.y + lat_noise.sample(&mut dyn_rng);
        let est_heading = state.pose.heading + head_noise.sample(&mut dyn_rng) + bias;

        let path = plan_path(cfg.horizon, est_lateral, est_heading, &cfg.planner);
        let path_world: Vec<(f64, f64)> = path
            .waypoints
            .iter()
            .map(|&[x, y]| state.pose.to_world(x as f64, y as f64))
            .collect();
        let labels = label_horizon(&world, &path_world);

        let mut lidar = lidar_scan(&world, &state.pose);
        if lidar_rng.random::<f64>() < world_cfg.lidar_occlusion_probability {
            occlude_lidar(&mut lidar, &mut lidar_rng);
            flags.lidar_occluded = true;
        }
        let mut image = render_camera(&world, &state.pose, &cfg.camera);
        if cam_rng.random::<f64>() < world_cfg.camera_occlusion_probability {
            occlude_camera(&mut image, &mut cam_rng);
            flags.camera_occluded = true;
        }

        // Execute one waypoint of the plan.
        let (nx, ny) = path_world[1];
        let (ax, ay) = path_world[2.min(path_world.len() - 1)];
        let mut heading = if path_world.len() > 2 {
            (ay - ny).atan2(ax - nx)
        } else {
            (ny - state.pose.y).atan2(nx - state.pose.x)
        };
        heading += drive_noise.sample(&mut dyn_rng);
        let next = Pose { x: nx, y: ny, heading };
        if let Some((left, b)) = state.corruption {
            state.corruption = (left > 1).then_some((left - 1, b));
        }
        if labels[0] == 1 || world.violates(nx, ny) {
            flags.failed = true;
            state.failures += 1;
            state.corruption = None;
            state.pose = Pose { x: nx.max(state.pose.x), y: 0.0, heading: 0.0 };
            reset_to_free(&world, &mut state.pose);
        } else {
            state.pose = next;
        }

        frames.push(ObservationFrame {
            episode,
            index: index as u32,
            timestamp: index as f64 / cfg.frame_rate,
            image,
            lidar,
            path,
            labels,
            flags,
            pose,
        });
    }
    Ok(frames)
}

/// Back on the centreline, advanced until the robot is collision-free.
fn reset_to_free(world: &World, pose: &mut Pose) {
    pose.y = 0.0;
    pose.heading = 0.0;
    while world.violates(pose.x, pose.y) && pose.x < world.length {
        pose.x += WAYPOINT_SPACING / 4.0;
    }
}

/// `episodes` drives whose world seeds are derived from `master_seed`.
pub fn simulate_episodes(
    world_cfg: &WorldConfig,
    cfg: &EpisodeConfig,
    episodes: usize,
    master_seed: u64,
) -> Result<Vec<Vec<ObservationFrame>>> {
    (0..episodes)
        .map(|e| {
            let wc = WorldConfig {
                seed: episode_seed(master_seed, e as u64),
                ..world_cfg.clone()
            };
            run_episode(&wc, cfg, e as u32)
        })
        .collect()
}

/// SplitMix64 of `(master, index)`.
pub fn episode_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(frames: usize) -> EpisodeConfig {
        EpisodeConfig {
            frames,
            ..EpisodeConfig::default()
        }
    }

    #[test]
    fn clean_drive_has_no_failures() {
        let frames = run_episode(&WorldConfig::clean(4), &short(150), 0).unwrap();
        assert_eq!(frames.len(), 150);
        assert!(frames.iter().all(|f| !f.is_anomalous() && !f.flags.failed));
    }

    #[test]
    fn labels_are_absorbing_and_sized() {
        let frames = run_episode(&WorldConfig::default(), &short(300), 0).unwrap();
        for f in &frames {
            assert_eq!(f.labels.len(), 10);
            assert_eq!(f.lidar.len(), 1081);
            assert!(f.labels.windows(2).all(|w| w[0] <= w[1]));
            f.path.validate(10).unwrap();
        }
    }

    #[test]
    fn same_seed_is_reproducible() {
        let a = run_episode(&WorldConfig::default(), &short(60), 2).unwrap();
        let b = run_episode(&WorldConfig::default(), &short(60), 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn camera_occlusion_does_not_touch_lidar() {
        let none = WorldConfig {
            camera_occlusion_probability: 0.0,
            ..WorldConfig::default()
        };
        let all = WorldConfig {
            camera_occlusion_probability: 1.0,
            ..WorldConfig::default()
        };
        let a = run_episode(&none, &short(80), 0).unwrap();
        let b = run_episode(&all, &short(80), 0).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            assert_eq!(fa.lidar, fb.lidar);
            assert_eq!(fa.labels, fb.labels);
        }
        assert!(b.iter().all(|f| f.flags.camera_occluded));
        assert!(a.iter().zip(&b).any(|(fa, fb)| fa.image != fb.image));
    }

    #[test]
    fn timestamps_follow_frame_rate() {
        let frames = run_episode(&WorldConfig::clean(1), &short(7), 0).unwrap();
        assert!((frames[6].timestamp - 2.0).abs() < 1e-12);
    }

    #[test]
    fn corrupted_heading_leads_to_labelled_failure() {
        let cfg = WorldConfig {
            heading_corruption_probability: 1.0,
            corruption_angle_deg: (25.0, 25.0),
            corruption_frames: (6, 6),
            ..WorldConfig::clean(9)
        };
        let frames = run_episode(&cfg, &short(30), 0).unwrap();
        assert!(frames.iter().any(|f| f.is_anomalous()));
        assert!(frames.iter().any(|f| f.flags.failed));
    }
}
