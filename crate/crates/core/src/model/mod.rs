//! The detector network, its input pipeline and checkpoint format.

mod checkpoint;
mod config;
mod input;
mod network;
mod verify;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use config::{AttentionKind, FusionMode, PaadConfig, PathView};
pub use input::{
    assemble_batch, batch_labels, lidar_tensor, normalize_lidar, path_raster, prepare_frame,
    PreparedFrame,
};
pub use network::{
    FailureProfile, ForwardPass, LidarPosterior, NetworkInput, OutputGrads, Paad, LOGVAR_LIMIT,
    PROFILE_EPS,
};
pub use verify::network_gradient_check;
