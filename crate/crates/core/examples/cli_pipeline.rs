//! The command-line workflow end to end in a temporary directory:
//! simulate, train, eval, monitor, plot.
//!
//! ```bash
//! cargo run --release --example cli_pipeline
//! ```

use clap::Parser;
use paad::cli::{run, Cli};

fn paad(args: &[&str]) -> paad::Result<String> {
    let cli = Cli::try_parse_from(std::iter::once("paad").chain(args.iter().copied()))
        .map_err(|e| paad::PaadError::Input(e.to_string()))?;
    run(&cli)
}

pub fn run_example() -> paad::Result<()> {
    let dir = std::env::temp_dir().join(format!("paad-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let config = p("run.toml");
    std::fs::write(
        &config,
        "seed = 3\n[simulation]\nepisodes = 3\nframes_per_episode = 150\n[train]\nepochs = 2\nvalidation_fraction = 0.34\n",
    )?;

    let (train_set, test_set, ckpt) = (p("train.bin"), p("test.bin"), p("paad.ckpt"));
    print!("{}", paad(&["simulate", "--config", &config, "--out", &train_set])?);
    print!("{}", paad(&["simulate", "--config", &config, "--seed", "99", "--out", &test_set])?);
    print!("{}", paad(&["train", "--config", &config, "--dataset", &train_set, "--out", &ckpt])?);
    let lidar_ckpt = p("lidar_only.ckpt");
    paad(&["train", "--config", &config, "--fusion-mode", "lidar-only", "--dataset", &train_set, "--out", &lidar_ckpt])?;
    let report = p("report.json");
    print!(
        "{}",
        paad(&["eval", "--config", &config, "--checkpoint", &ckpt, &lidar_ckpt, "--dataset", &test_set, "--out", &report])?
    );
    print!(
        "{}",
        paad(&["monitor", "--config", &config, "--checkpoint", &ckpt, "--dataset", &test_set, "--out", &p("events.csv")])?
    );
    print!("{}", paad(&["plot", "--report", &report, "--out", &p("plots")])?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
