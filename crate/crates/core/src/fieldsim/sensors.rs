use rand::Rng;

use super::world::{ObstacleKind, World};
use super::Pose;
use crate::geometry::CameraModel;

pub const LIDAR_BEAMS: usize = 1081;
/// Angle of beam 0 (deg); negative angles look to the left.
pub const LIDAR_START_DEG: f64 = -135.0;
pub const LIDAR_STEP_DEG: f64 = 0.25;
pub const LIDAR_MAX_RANGE: f64 = 10.0;

/// Robot-frame angle (rad) of beam `i`.
pub fn beam_angle(i: usize) -> f64 {
    (LIDAR_START_DEG + LIDAR_STEP_DEG * i as f64).to_radians()
}

/// 8-bit grayscale camera frame, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.cols + col]
    }
}

/// Planar scan at `lidar_height`: obstacles shorter than the scan plane are missed.
pub fn lidar_scan(world: &World, pose: &Pose) -> Vec<f32> {
    let mut ranges = vec![LIDAR_MAX_RANGE; LIDAR_BEAMS];
    let reach = LIDAR_MAX_RANGE + 0.5;
    let step = LIDAR_STEP_DEG.to_radians();
    let start = LIDAR_START_DEG.to_radians();
    for o in world.obstacles_between(pose.x - reach, pose.x + reach) {
        if o.height < world.config.lidar_height {
            continue;
        }
        let (rx, ry) = pose.to_robot(o.x, o.y);
        let d = rx.hypot(ry);
        if d - o.radius > LIDAR_MAX_RANGE {
            continue;
        }
        if d <= o.radius {
            ranges.iter_mut().for_each(|r| *r = r.min(1e-3));
            continue;
        }
        let bearing = ry.atan2(rx);
        let half = (o.radius / d).asin();
        let lo = ((bearing - half - start) / step).ceil().max(0.0);
        let hi = ((bearing + half - start) / step).floor().min((LIDAR_BEAMS - 1) as f64);
        if lo > hi {
            continue;
        }
        for (i, range) in ranges
            .iter_mut()
            .enumerate()
            .take(hi as usize + 1)
            .skip(lo as usize)
        {
            let (s, c) = beam_angle(i).sin_cos();
            let along = rx * c + ry * s;
            let perp2 = d * d - along * along;
            let r2 = o.radius * o.radius;
            if perp2 > r2 {
                continue;
            }
            let t = along - (r2 - perp2).sqrt();
            if t > 0.0 && t < *range {
                *range = t;
            }
        }
    }
    ranges.into_iter().map(|r| r as f32).collect()
}

/// Near-field blockage: a wide sector of beams returns very short ranges.
pub fn occlude_lidar<R: Rng>(ranges: &mut [f32], rng: &mut R) {
    let centre: f64 = rng.random_range(-60.0..60.0);
    let width: f64 = rng.random_range(60.0..120.0);
    for (i, r) in ranges.iter_mut().enumerate() {
        let a = LIDAR_START_DEG + LIDAR_STEP_DEG * i as f64;
        if (a - centre).abs() <= width / 2.0 {
            *r = rng.random_range(0.05..0.25);
        }
    }
}

const SKY: f64 = 0.8;
const GROUND: f64 = 0.3;
const CLUTTER: f64 = 0.95;
const MAX_RENDER_DEPTH: f64 = 12.0;

/// Renders stalks and clutter as depth-scaled vertical splats, far to near.
pub fn render_camera(world: &World, pose: &Pose, cam: &CameraModel) -> GrayImage {
    let (rows, cols) = (cam.rows, cam.cols);
    let horizon = cam.horizon();
    let mut canvas: Vec<f64> = (0..rows * cols)
        .map(|i| if ((i / cols) as f64) < horizon { SKY } else { GROUND })
        .collect();

    let mut visible: Vec<(f64, f64, f64, usize)> = Vec::new();
    let obstacles = world.obstacles_between(pose.x - 1.0, pose.x + MAX_RENDER_DEPTH + 1.0);
    for (k, o) in obstacles.iter().enumerate() {
        let (rx, ry) = pose.to_robot(o.x, o.y);
        if rx > 0.05 && rx < MAX_RENDER_DEPTH {
            visible.push((rx, ry, rx.hypot(ry), k));
        }
    }
    visible.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.abs().total_cmp(&b.1.abs())));

    let px = |u: f64| (u + 0.5).floor();
    for &(rx, ry, _, k) in &visible {
        let o = &obstacles[k];
        let Some((cc, bottom, depth)) = cam.project_point(rx, ry, 0.0) else {
            continue;
        };
        let Some((_, top, _)) = cam.project_point(rx, ry, o.height) else {
            continue;
        };
        let half_width = cam.focal * o.radius / depth;
        let shade = match o.kind {
            ObstacleKind::Stalk => 0.08 + 0.3 * (depth / MAX_RENDER_DEPTH).min(1.0),
            ObstacleKind::Clutter => CLUTTER,
        };
        let c0 = px(cc - half_width).max(0.0);
        let c1 = px(cc + half_width).min(cols as f64 - 1.0);
        let r0 = px(top).max(0.0);
        let r1 = px(bottom).min(rows as f64 - 1.0);
        if c0 > c1 || r0 > r1 {
            continue;
        }
        for r in r0 as usize..=r1 as usize {
            for c in c0 as usize..=c1 as usize {
                canvas[r * cols + c] = shade;
            }
        }
    }
    GrayImage {
        rows,
        cols,
        pixels: canvas.into_iter().map(to_u8).collect(),
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Leaf pressed against the lens: a full-height band covering at least 70%
/// of the columns is replaced by blotchy texture.
pub fn occlude_camera<R: Rng>(img: &mut GrayImage, rng: &mut R) {
    let min_cols = (0.7 * img.cols as f64).ceil() as usize;
    let width = rng.random_range(min_cols..=img.cols);
    let start = rng.random_range(0..=img.cols - width);
    let block = 4;
    let bcols = img.cols.div_ceil(block);
    let blotches: Vec<u8> = (0..img.rows.div_ceil(block) * bcols)
        .map(|_| to_u8(rng.random_range(0.05..0.5)))
        .collect();
    for r in 0..img.rows {
        for c in start..start + width {
            img.pixels[r * img.cols + c] = blotches[(r / block) * bcols + c / block];
        }
    }
}
