//! Training objectives and the optimization loop.

mod checkpoint;
mod losses;
mod pseudo;
mod train;

pub use checkpoint::{
    checkpoint_container, checkpoint_from_container, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use losses::{batch_supervised_loss, rmse, supervised_loss, total_loss};
pub use pseudo::{
    block_log_prior, block_pseudo_likelihood, direct_product_pseudo_likelihood, lineage_log_eta,
    run_block_pseudo_likelihood, BlockAccumulator, BlockStep,
};
pub use train::{
    evaluate, read_metrics, train, trajectory_loss, validation_seed, write_metrics, EpochMetrics, Method, TrainConfig,
    TrainState, TrajectoryEval, TrajectoryLoss,
};
