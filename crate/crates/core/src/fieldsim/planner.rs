use serde::{Deserialize, Serialize};

use crate::geometry::{PlannedPath, WAYPOINT_SPACING};

/// Pure-pursuit row follower.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Lookahead distance along the row (m).
    pub lookahead: f64,
    /// Curvature limit (1/m).
    pub max_curvature: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            lookahead: 1.0,
            max_curvature: 2.0,
        }
    }
}

/// Plans `horizon` waypoints toward the row centreline from the robot's
/// *estimated* lateral offset and heading relative to the row.
///
/// Returned waypoints are in the robot frame; waypoint 0 is the robot itself.
/// When the estimate is wrong the path is planned in the wrong frame.
pub fn plan_path(
    horizon: usize,
    est_lateral: f64,
    est_heading: f64,
    cfg: &PlannerConfig,
) -> PlannedPath {
    let (mut px, mut py, mut psi) = (0.0f64, est_lateral, est_heading);
    let (s0, c0) = est_heading.sin_cos();
    let mut out = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let (dx, dy) = (px, py - est_lateral);
        out.push([(dx * c0 + dy * s0) as f32, (-dx * s0 + dy * c0) as f32]);
        if k + 1 == horizon {
            break;
        }
        let alpha = (-py).atan2(cfg.lookahead) - psi;
        let kappa = (2.0 * alpha.sin() / cfg.lookahead).clamp(-cfg.max_curvature, cfg.max_curvature);
        psi += kappa * WAYPOINT_SPACING;
        px += WAYPOINT_SPACING * psi.cos();
        py += WAYPOINT_SPACING * psi.sin();
    }
    PlannedPath::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centred_robot_plans_straight() {
        let path = plan_path(10, 0.0, 0.0, &PlannerConfig::default());
        path.validate(10).unwrap();
        for (k, w) in path.waypoints.iter().enumerate() {
            assert!((w[0] - 0.2 * k as f32).abs() < 1e-6);
            assert!(w[1].abs() < 1e-6);
        }
    }

    #[test]
    fn offset_robot_steers_back() {
        let path = plan_path(10, 0.2, 0.0, &PlannerConfig::default());
        path.validate(10).unwrap();
        // Robot right of centre: the path bends left (negative y).
        assert!(path.waypoints[9][1] < -0.1);
    }

    #[test]
    fn corrupted_heading_bends_path_opposite() {
        // Believing it points 20 deg right, the planner turns left.
        let path = plan_path(10, 0.0, 20f64.to_radians(), &PlannerConfig::default());
        assert!(path.waypoints[9][1] < -0.3, "{:?}", path.waypoints[9]);
        let mirrored = plan_path(10, 0.0, -20f64.to_radians(), &PlannerConfig::default());
        assert_eq!(mirrored, path.mirrored());
    }
}
