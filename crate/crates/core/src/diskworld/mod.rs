//! Synthetic disk-tracking environment: a red target disk moving among
//! colored distractors, rendered to small RGB frames.

mod dataset;
mod env;

pub use dataset::{export_pngs, Dataset, DATASET_MAGIC, DATASET_VERSION};
pub use env::{
    generate_trajectory, increment_std, render_frame, render_observations, sample_track, DiskTrack, Distractor,
    EnvConfig, Trajectory, PALETTE, TARGET_COLOR,
};
