//! Drives a few simulated corn rows and summarizes what the sensors and
//! labels look like.
//!
//! ```bash
//! cargo run --release --example simulate_field
//! ```

use paad::fieldsim::{simulate_episodes, EpisodeConfig, WorldConfig};

pub fn run_example() -> paad::Result<()> {
    let world = WorldConfig::default();
    let episode = EpisodeConfig {
        frames: 400,
        ..EpisodeConfig::default()
    };
    let runs = simulate_episodes(&world, &episode, 6, 2024)?;
    let mut total = 0;
    let mut anomalous = 0;
    let mut failures = 0;
    let mut per_step = vec![0usize; episode.horizon];
    for frames in &runs {
        for f in frames {
            total += 1;
            anomalous += f.is_anomalous() as usize;
            failures += f.flags.failed as usize;
            for (k, &l) in f.labels.iter().enumerate() {
                per_step[k] += l as usize;
            }
        }
    }
    println!("frames: {total}");
    println!(
        "anomalous frames: {anomalous} ({:.1}%)",
        100.0 * anomalous as f64 / total as f64
    );
    println!("failures (resets): {failures}");
    println!("positives per step: {per_step:?}");

    let f = &runs[0][0];
    let near = f.lidar.iter().cloned().fold(f32::INFINITY, f32::min);
    println!(
        "first frame: {}x{} image, {} beams (nearest {near:.2} m), {} waypoints",
        f.image.rows,
        f.image.cols,
        f.lidar.len(),
        f.path.len()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
