//! Command implementations behind the `tvae` binary: configuration,
//! checkpoints, data loading, training, evaluation and exports.

pub mod baseline;
pub mod checkpoint;
pub mod config;
pub mod container;
pub mod dataset;
pub mod evaluate;
pub mod latent;
pub mod predict;
pub mod seeds;
pub mod sweep;
pub mod train;
