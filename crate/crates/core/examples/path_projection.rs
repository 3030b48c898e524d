//! Projects a curving plan into the front camera and the bird's-eye grid
//! and prints both rasters as text.
//!
//! ```bash
//! cargo run --release --example path_projection
//! ```

use paad::geometry::{crop_roi, project_bev, project_path, CameraModel, PathImage, PlannedPath};

fn ascii(img: &PathImage) -> String {
    let mut s = String::new();
    for r in 0..img.rows {
        for c in 0..img.cols {
            s.push(if img.get(r, c) != 0 { '#' } else { '.' });
        }
        s.push('\n');
    }
    s
}

pub fn run_example() -> paad::Result<()> {
    // Ten waypoints 0.2 m apart, bending right at curvature 0.8 /m.
    let mut wps = Vec::new();
    let (mut x, mut y, mut h) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        wps.push([x as f32, y as f32]);
        x += 0.2 * h.cos();
        y += 0.2 * h.sin();
        h += 0.2 * 0.8;
    }
    let path = PlannedPath::new(wps);
    path.validate(10)?;

    let cam = CameraModel::default();
    let front = project_path(&path, &cam)?;
    let roi = crop_roi(&front)?;
    println!(
        "front view {}x{}, ROI rows {:?}, {} pixels set",
        front.rows,
        front.cols,
        front.roi,
        front.count_set()
    );
    print!("{}", ascii(&roi));

    let bev = project_bev(&path, 18.0, 40);
    println!("bird's-eye {}x{}, {} pixels set", bev.rows, bev.cols, bev.count_set());
    print!("{}", ascii(&bev));

    let mirrored = project_bev(&path.mirrored(), 18.0, 40);
    println!("mirrored plan sets {} pixels", mirrored.count_set());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
