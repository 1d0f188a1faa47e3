//! Trajectory files, observation windows, augmentation and dataset splits.

pub mod augment;
pub mod scene;
pub mod split;
pub mod synth;
pub mod window;

pub use augment::{
    augment, sample_transform, transform_window, AugmentationConfig, RigidTransform,
};
pub use scene::{
    parse_trajectory_file, parse_trajectory_str, AgentId, ParseOptions, Track, TrajectoryScene,
    ETH_UCY_FRAME_DT, NBA_FRAME_DT,
};
pub use split::{fixed_split, leave_one_out, SplitMode, SplitSpec};
pub use synth::{synthetic_scene, SynthConfig};
pub use window::{
    make_windows, NeighborEntry, ObservationWindow, WindowSpec, DEFAULT_OBS_LEN, DEFAULT_PRED_LEN,
    DEFAULT_RADIUS,
};
