//! Finite-difference verification of every layer and of the full training
//! loss in 64-bit arithmetic.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use paad::diffcore::gradcheck::{layer_gradient_checks, TOLERANCE};
use paad::model::{network_gradient_check, PaadConfig};

pub fn run_example() -> paad::Result<()> {
    let mut worst: f64 = 0.0;
    for (name, r) in layer_gradient_checks(11) {
        println!(
            "{name:<16} rel err {:.2e}  ({} compared, {} kinks skipped)",
            r.rel_error, r.compared, r.skipped
        );
        worst = worst.max(r.rel_error);
    }
    let reports = network_gradient_check(&PaadConfig::compact(), 11, 6)?;
    let failing: Vec<_> = reports.iter().filter(|(_, r)| !r.passes(TOLERANCE)).collect();
    for (name, r) in &reports {
        worst = worst.max(r.rel_error);
        if r.skipped > 0 {
            println!("{name}: {} kink coordinates skipped", r.skipped);
        }
    }
    println!(
        "network: {} parameter tensors, {} failing, worst relative error {worst:.2e} (tolerance {TOLERANCE:.0e})",
        reports.len(),
        failing.len()
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
