//! Procedural corn-row field: world generation, 2D LiDAR, camera rendering,
//! a pure-pursuit planner and labelled episode recording.
//!
//! World frame: rows run along `x`; `y` is lateral (positive to the robot's
//! right when heading is 0). Heading rotates `x` toward `y`.

mod episode;
mod planner;
mod sensors;
mod world;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use episode::{
    episode_seed, episode_world, label_horizon, run_episode, simulate_episodes, EpisodeConfig, FrameFlags,
    ObservationFrame, RobotState,
};
pub use planner::{plan_path, PlannerConfig};
pub use sensors::{
    beam_angle, lidar_scan, occlude_camera, occlude_lidar, render_camera, GrayImage, LIDAR_BEAMS,
    LIDAR_MAX_RANGE, LIDAR_START_DEG, LIDAR_STEP_DEG,
};
pub use world::{
    generate_world, generate_world_with_length, Obstacle, ObstacleKind, World, WorldConfig,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians.
    pub heading: f64,
}

impl Pose {
    /// World point in this pose's robot frame.
    pub fn to_robot(&self, wx: f64, wy: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let (dx, dy) = (wx - self.x, wy - self.y);
        (dx * c + dy * s, -dx * s + dy * c)
    }

    pub fn to_world(&self, rx: f64, ry: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (self.x + rx * c - ry * s, self.y + rx * s + ry * c)
    }
}

pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_round_trip() {
        let p = Pose { x: 1.5, y: -0.2, heading: 0.4 };
        let (rx, ry) = p.to_robot(3.0, 1.0);
        let (wx, wy) = p.to_world(rx, ry);
        assert!((wx - 3.0).abs() < 1e-12 && (wy - 1.0).abs() < 1e-12);
    }
}
