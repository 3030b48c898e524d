//! Proactive anomaly detection for field robots: predicts per-step failure
//! probabilities along a planned path from a camera image, a 2D LiDAR scan
//! and the path itself.
//!
//! Module map:
//! - [`diffcore`]: tensors, layers with explicit backward passes, Adam.
//! - [`geometry`]: path projection into the camera and bird's-eye rasters.
//! - [`model`]: the fusion network, its inputs and checkpoints.
//! - [`loss`]: weighted BCE plus the LiDAR negative ELBO.
//! - [`fieldsim`]: corn-row simulator producing labelled frames.
//! - [`metrics`]: F1, PR-AUC, bounded KDE.
//! - [`monitor`]: streaming score and alert trigger.
//! - [`cli`]: dataset files, run configuration, training and commands.

pub mod cli;
pub mod diffcore;
pub mod error;
pub mod fieldsim;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod monitor;

pub use error::{PaadError, Result};
