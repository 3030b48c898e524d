//! Planned-path rasterization: perspective (front view) and bird's-eye view.
//!
//! Robot frame: `x` forward, `y` lateral to the right, `z` up, all in metres.
//! Image coordinates: `col` grows to the right, `row` grows downward; a
//! continuous coordinate `u` lands in pixel `floor(u + 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, PaadError, Result};

/// Nearest depth (m) that still projects.
const NEAR_PLANE: f64 = 1e-3;

/// Waypoint spacing along a planned path (m).
pub const WAYPOINT_SPACING: f64 = 0.2;
pub const SPACING_TOLERANCE: f64 = 0.02;

/// Pinhole camera mounted on the robot looking forward, pitched down by `pitch`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point row (pixels).
    pub principal_row: f64,
    /// Principal point column (pixels).
    pub principal_col: f64,
    /// Mount height above ground (m).
    pub height: f64,
    /// Downward pitch (rad).
    pub pitch: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel::for_resolution(60, 80)
    }
}

impl CameraModel {
    /// Default intrinsics for an image of `rows × cols`: focal length of
    /// 160 px at 320 columns (scaled linearly), principal point at the image
    /// centre, 0.3 m mount height and a level camera.
    pub fn for_resolution(rows: usize, cols: usize) -> Self {
        CameraModel {
            focal: 160.0 * cols as f64 / 320.0,
            principal_row: rows as f64 / 2.0,
            principal_col: cols as f64 / 2.0,
            height: 0.3,
            pitch: 0.0,
            rows,
            cols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) {
            return config_err(format!("camera focal length {} must be positive", self.focal));
        }
        if !(self.height > 0.0) {
            return config_err(format!("camera height {} must be positive", self.height));
        }
        if self.rows == 0 || self.cols == 0 {
            return config_err("camera image size must be non-zero");
        }
        let inside = (0.0..self.rows as f64).contains(&self.principal_row)
            && (0.0..self.cols as f64).contains(&self.principal_col);
        if !inside {
            return config_err(format!(
                "principal point ({}, {}) lies outside the {}x{} image",
                self.principal_row, self.principal_col, self.rows, self.cols
            ));
        }
        if self.pitch.abs() >= std::f64::consts::FRAC_PI_2 {
            return config_err("camera pitch must lie strictly within ±90°");
        }
        Ok(())
    }

    /// Continuous image row of the horizon line.
    pub fn horizon(&self) -> f64 {
        self.principal_row - self.focal * self.pitch.tan()
    }

    /// Row range `[start, rows)` below the horizon.
    pub fn roi_rows(&self) -> Result<(usize, usize)> {
        let start = self.horizon().floor().max(0.0);
        if start >= self.rows as f64 {
            return config_err(format!(
                "horizon row {:.2} leaves an empty region of interest in a {}-row image",
                self.horizon(),
                self.rows
            ));
        }
        Ok((start as usize, self.rows))
    }

    /// Camera-frame `(depth, right, down)` of a robot-frame point.
    fn to_camera(&self, x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        let (s, c) = self.pitch.sin_cos();
        let dz = self.height - z;
        (c * x + s * dz, y, -s * x + c * dz)
    }

    /// Continuous `(col, row, depth)` of a robot-frame point, `None` behind the camera.
    pub fn project_point(&self, x: f64, y: f64, z: f64) -> Option<(f64, f64, f64)> {
        let (depth, right, down) = self.to_camera(x, y, z);
        if depth < NEAR_PLANE {
            return None;
        }
        Some((
            self.principal_col + self.focal * right / depth,
            self.principal_row + self.focal * down / depth,
            depth,
        ))
    }
}

/// Planned waypoints in the robot frame (`x` forward, `y` right), spaced 0.2 m apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub waypoints: Vec<[f32; 2]>,
}

impl PlannedPath {
    pub fn new(waypoints: Vec<[f32; 2]>) -> Self {
        PlannedPath { waypoints }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Checks the waypoint count and the 0.2 ± 0.02 m spacing.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.waypoints.len() != horizon {
            return Err(PaadError::Input(format!(
                "path has {} waypoints, horizon is {horizon}",
                self.waypoints.len()
            )));
        }
        for (k, pair) in self.waypoints.windows(2).enumerate() {
            let d = ((pair[1][0] - pair[0][0]) as f64).hypot((pair[1][1] - pair[0][1]) as f64);
            if (d - WAYPOINT_SPACING).abs() > SPACING_TOLERANCE {
                return Err(PaadError::Input(format!(
                    "waypoints {k} and {} are {d:.3} m apart",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn mirrored(&self) -> PlannedPath {
        PlannedPath::new(self.waypoints.iter().map(|&[x, y]| [x, -y]).collect())
    }
}

/// Binary single-channel path raster plus its region-of-interest rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    /// Region of interest `[start, end)` in rows of this image.
    pub roi: (usize, usize),
}

impl PathImage {
    pub fn blank(rows: usize, cols: usize, roi: (usize, usize)) -> Self {
        PathImage {
            rows,
            cols,
            pixels: vec![0; rows * cols],
            roi,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.cols + col]
    }

    pub fn count_set(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    /// `(row, col)` of every set pixel, row-major.
    pub fn set_pixels(&self) -> Vec<(usize, usize)> {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0)
            .map(|(i, _)| (i / self.cols, i % self.cols))
            .collect()
    }

    fn set(&mut self, row: i64, col: i64) {
        if row >= self.roi.0 as i64
            && row < self.roi.1 as i64
            && col >= 0
            && col < self.cols as i64
        {
            self.pixels[row as usize * self.cols + col as usize] = 1;
        }
    }

    /// Clip the continuous segment to the frame and rasterize it.
    fn draw_segment(&mut self, a: (f64, f64), b: (f64, f64)) {
        let lo = -0.5;
        let hi_c = self.cols as f64 - 0.5 - 1e-9;
        let hi_r = self.rows as f64 - 0.5 - 1e-9;
        if let Some((p, q)) = clip_segment(a, b, (lo, lo), (hi_c, hi_r)) {
            let to_px = |v: f64| (v + 0.5).floor() as i64;
            rasterize_line((to_px(p.1), to_px(p.0)), (to_px(q.1), to_px(q.0)), |r, c| {
                self.set(r, c)
            });
        }
    }
}

/// Liang–Barsky clipping of segment `a→b` (points as `(x, y)`) to a rectangle.
fn clip_segment(
    a: (f64, f64),
    b: (f64, f64),
    min: (f64, f64),
    max: (f64, f64),
) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, a.0 - min.0),
        (dx, max.0 - a.0),
        (-dy, a.1 - min.1),
        (dy, max.1 - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((
        (a.0 + t0 * dx, a.1 + t0 * dy),
        (a.0 + t1 * dx, a.1 + t1 * dy),
    ))
}

/// Integer midpoint (Bresenham) line between `(row, col)` endpoints, both inclusive.
pub fn rasterize_line(from: (i64, i64), to: (i64, i64), mut plot: impl FnMut(i64, i64)) {
    let (mut r, mut c) = from;
    let dr = (to.0 - from.0).abs();
    let dc = -(to.1 - from.1).abs();
    let sr = if from.0 < to.0 { 1 } else { -1 };
    let sc = if from.1 < to.1 { 1 } else { -1 };
    let mut err = dr + dc;
    loop {
        plot(r, c);
        if r == to.0 && c == to.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            r += sr;
        }
        if e2 <= dr {
            err += dr;
            c += sc;
        }
    }
}

/// Front-view rasterization of a ground-plane path through `cam`.
///
/// Consecutive waypoints are joined by 1-pixel segments; the parts of a
/// segment behind the camera or outside the frame are dropped.
pub fn project_path(path: &PlannedPath, cam: &CameraModel) -> Result<PathImage> {
    cam.validate()?;
    let roi = cam.roi_rows()?;
    let mut img = PathImage::blank(cam.rows, cam.cols, roi);
    let pts: Vec<(f64, f64)> = path
        .waypoints
        .iter()
        .map(|&[x, y]| (x as f64, y as f64))
        .collect();
    if pts.len() == 1 {
        if let Some((c, r, _)) = cam.project_point(pts[0].0, pts[0].1, 0.0) {
            img.draw_segment((c, r), (c, r));
        }
        return Ok(img);
    }
    for pair in pts.windows(2) {
        if let Some((a, b)) = clip_to_front(cam, pair[0], pair[1]) {
            img.draw_segment(a, b);
        }
    }
    Ok(img)
}

/// Clips a ground segment to the part in front of the camera and projects it.
fn clip_to_front(
    cam: &CameraModel,
    p: (f64, f64),
    q: (f64, f64),
) -> Option<((f64, f64), (f64, f64))> {
    let dp = cam.to_camera(p.0, p.1, 0.0).0;
    let dq = cam.to_camera(q.0, q.1, 0.0).0;
    let near = 2.0 * NEAR_PLANE;
    if dp < near && dq < near {
        return None;
    }
    let lerp = |t: f64| (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1));
    let (p, q) = if dp < near {
        (lerp((near - dp) / (dq - dp)), q)
    } else if dq < near {
        (p, lerp((near - dp) / (dq - dp)))
    } else {
        (p, q)
    };
    let (pc, pr, _) = cam.project_point(p.0, p.1, 0.0)?;
    let (qc, qr, _) = cam.project_point(q.0, q.1, 0.0)?;
    Some(((pc, pr), (qc, qr)))
}

/// Keeps only the region-of-interest rows. Idempotent.
pub fn crop_roi(img: &PathImage) -> Result<PathImage> {
    let (start, end) = img.roi;
    if start >= end || end > img.rows {
        return config_err(format!(
            "empty region of interest {start}..{end} in a {}-row image",
            img.rows
        ));
    }
    Ok(PathImage {
        rows: end - start,
        cols: img.cols,
        pixels: img.pixels[start * img.cols..end * img.cols].to_vec(),
        roi: (0, end - start),
    })
}

/// Orthographic top-down rasterization; the robot sits just below the
/// bottom-centre of a `grid × grid` raster.
pub fn project_bev(path: &PlannedPath, scale_px_per_m: f64, grid: usize) -> PathImage {
    let mut img = PathImage::blank(grid, grid, (0, grid));
    let to_px = |&[x, y]: &[f32; 2]| {
        (
            grid as f64 / 2.0 + scale_px_per_m * y as f64,
            grid as f64 - scale_px_per_m * x as f64,
        )
    };
    let pts: Vec<(f64, f64)> = path.waypoints.iter().map(to_px).collect();
    if pts.len() == 1 {
        img.draw_segment(pts[0], pts[0]);
    }
    for pair in pts.windows(2) {
        img.draw_segment(pair[0], pair[1]);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n: usize) -> PlannedPath {
        PlannedPath::new((0..n).map(|k| [0.2 * k as f32, 0.0]).collect())
    }

    fn arc(n: usize, curvature: f64) -> PlannedPath {
        let (mut x, mut y, mut h) = (0.0f64, 0.0f64, 0.0f64);
        let mut pts = vec![[0.0f32, 0.0]];
        for _ in 1..n {
            h += curvature * 0.2;
            x += 0.2 * h.cos();
            y += 0.2 * h.sin();
            pts.push([x as f32, y as f32]);
        }
        PlannedPath::new(pts)
    }

    #[test]
    fn straight_path_lies_on_principal_column() {
        let cam = CameraModel::default();
        let img = project_path(&straight(10), &cam).unwrap();
        assert!(img.count_set() > 0);
        for (_, c) in img.set_pixels() {
            assert_eq!(c as f64, cam.principal_col);
        }
    }

    #[test]
    fn single_waypoint_matches_pinhole_formula() {
        let cam = CameraModel::default();
        // Level camera: row = cy + f·h/x, col = cx + f·y/x.
        let img = project_path(&PlannedPath::new(vec![[1.0, 0.0]]), &cam).unwrap();
        let expected_row = (30.0 + 40.0 * 0.3 / 1.0 + 0.5f64).floor() as usize;
        assert_eq!(img.set_pixels(), vec![(expected_row, 40)]);
        let img = project_path(&PlannedPath::new(vec![[2.0, 0.5]]), &cam).unwrap();
        let col = (40.0 + 40.0 * 0.5 / 2.0 + 0.5f64).floor() as usize;
        let row = (30.0 + 40.0 * 0.3 / 2.0 + 0.5f64).floor() as usize;
        assert_eq!(img.set_pixels(), vec![(row, col)]);
    }

    #[test]
    fn pitched_camera_matches_rotated_pinhole() {
        let mut cam = CameraModel::default();
        cam.pitch = 0.2;
        let (s, c) = cam.pitch.sin_cos();
        let (x, y) = (1.5f64, -0.25f64);
        let depth = c * x + s * cam.height;
        let row = cam.principal_row + cam.focal * (-s * x + c * cam.height) / depth;
        let col = cam.principal_col + cam.focal * y / depth;
        let img = project_path(&PlannedPath::new(vec![[x as f32, y as f32]]), &cam).unwrap();
        let px = |v: f64| (v + 0.5).floor() as usize;
        assert_eq!(img.set_pixels(), vec![(px(row), px(col))]);
    }

    #[test]
    fn farther_waypoints_project_closer_to_horizon() {
        let cam = CameraModel::default();
        let mut last = f64::INFINITY;
        for k in 1..10 {
            let (_, row, _) = cam.project_point(0.5 + 0.2 * k as f64, 0.0, 0.0).unwrap();
            assert!(row < last);
            assert!(row > cam.horizon());
            last = row;
        }
    }

    #[test]
    fn mirrored_path_mirrors_image() {
        let cam = CameraModel::default();
        for curvature in [0.4, -0.9, 1.5] {
            let p = arc(10, curvature);
            let a = project_path(&p, &cam).unwrap();
            let b = project_path(&p.mirrored(), &cam).unwrap();
            for (r, c) in a.set_pixels() {
                let mirror = 2.0 * cam.principal_col - c as f64;
                if mirror < 1.0 || mirror > cam.cols as f64 - 2.0 {
                    continue;
                }
                let hit = (-1..=1).any(|d: i64| {
                    let m = mirror as i64 + d;
                    m >= 0 && m < cam.cols as i64 && b.get(r, m as usize) == 1
                });
                assert!(hit, "pixel ({r},{c}) has no mirror");
            }
        }
    }

    #[test]
    fn pixels_stay_inside_roi() {
        let cam = CameraModel::default();
        let img = project_path(&arc(10, 2.0), &cam).unwrap();
        let (start, _) = cam.roi_rows().unwrap();
        assert!(img.set_pixels().iter().all(|&(r, _)| r >= start));
    }

    #[test]
    fn waypoint_under_camera_is_skipped() {
        let cam = CameraModel::default();
        let img = project_path(&PlannedPath::new(vec![[0.0, 0.0]]), &cam).unwrap();
        assert_eq!(img.count_set(), 0);
    }

    #[test]
    fn crop_starts_at_principal_row_and_is_idempotent() {
        let cam = CameraModel::default();
        assert_eq!(cam.roi_rows().unwrap(), (30, 60));
        let img = project_path(&arc(10, 0.7), &cam).unwrap();
        let once = crop_roi(&img).unwrap();
        assert_eq!(once.rows, 30);
        assert_eq!(once.cols, 80);
        assert_eq!(crop_roi(&once).unwrap(), once);
        assert_eq!(once.count_set(), img.count_set());
        let blank = PathImage::blank(60, 80, (30, 60));
        assert_eq!(crop_roi(&blank).unwrap().count_set(), 0);
    }

    #[test]
    fn empty_roi_is_config_error() {
        let mut cam = CameraModel::default();
        cam.pitch = -1.2;
        assert!(matches!(cam.roi_rows(), Err(PaadError::Config(_))));
        let img = PathImage::blank(10, 10, (10, 10));
        assert!(crop_roi(&img).is_err());
    }

    #[test]
    fn bev_affine_map() {
        let img = project_bev(&PlannedPath::new(vec![[1.0, 0.5]]), 20.0, 80);
        assert_eq!(img.set_pixels(), vec![(60, 50)]);
    }

    #[test]
    fn bev_straight_path_is_centre_column() {
        let img = project_bev(&straight(10), 20.0, 80);
        assert!(img.count_set() > 0);
        assert!(img.set_pixels().iter().all(|&(_, c)| c == 40));
    }

    #[test]
    fn bev_left_and_right_arcs_mirror() {
        let a = project_bev(&arc(10, 1.0), 20.0, 80);
        let b = project_bev(&arc(10, -1.0), 20.0, 80);
        for (r, c) in a.set_pixels() {
            let m = 80 - c as i64;
            let hit = (-1..=1).any(|d| {
                let mm = m + d;
                (0..80).contains(&mm) && b.get(r, mm as usize) == 1
            });
            assert!(hit);
        }
    }

    #[test]
    fn pixel_count_is_bounded_by_segment_lengths() {
        let cam = CameraModel::default();
        let path = arc(10, -1.3);
        let img = project_path(&path, &cam).unwrap();
        let max_seg = path
            .waypoints
            .windows(2)
            .filter_map(|w| {
                let a = cam.project_point(w[0][0] as f64, w[0][1] as f64, 0.0)?;
                let b = cam.project_point(w[1][0] as f64, w[1][1] as f64, 0.0)?;
                Some((a.0 - b.0).abs().max((a.1 - b.1).abs()).min(200.0) + 1.0)
            })
            .fold(1.0, f64::max);
        assert!(img.count_set() as f64 <= 10.0 * max_seg);
    }

    #[test]
    fn spacing_validation() {
        assert!(straight(10).validate(10).is_ok());
        assert!(straight(9).validate(10).is_err());
        let bad = PlannedPath::new(vec![[0.0, 0.0], [0.5, 0.0]]);
        assert!(bad.validate(2).is_err());
    }
}
