//! Bounded-support density estimates of failure and nominal scores, drawn
//! as text histograms of the estimated curves.
//!
//! ```bash
//! cargo run --release --example score_density
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use paad::metrics::{kde_bounded, pr_auc, DensityEstimate};

fn draw(d: &DensityEstimate, rows: usize) {
    let peak = d.density.iter().cloned().fold(0.0, f64::max);
    let step = d.grid.len() / rows;
    for i in (0..d.grid.len()).step_by(step.max(1)) {
        let bar = (40.0 * d.density[i] / peak).round() as usize;
        println!("{:>5.3} {}", d.grid[i], "*".repeat(bar));
    }
}

pub fn run_example() -> paad::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Synthetic detector scores: nominal pairs crowd near 0, failures near 1.
    let squash = |z: f64| 1.0 / (1.0 + (-z).exp());
    let nominal: Vec<f64> = (0..2000).map(|_| squash(rng.random_range(-6.0..0.5))).collect();
    let failure: Vec<f64> = (0..300).map(|_| squash(rng.random_range(-1.0..5.0))).collect();

    for (name, s) in [("nominal", &nominal), ("failure", &failure)] {
        let d = kde_bounded(s, 200)?;
        println!(
            "{name}: bandwidth {:.3} (logit units), mode {:.3}, integral {:.6}",
            d.bandwidth,
            d.mode(),
            d.integral()
        );
        draw(&d, 20);
    }
    let mut scores = nominal.clone();
    scores.extend(&failure);
    let labels: Vec<u8> = (0..scores.len()).map(|i| (i >= nominal.len()) as u8).collect();
    println!("PR-AUC of the pooled scores: {:.3}", pr_auc(&scores, &labels)?.auc);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
