//! Training loop and patch-wise inference.

pub mod adam;
pub mod augment;
mod consolidate;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use augment::{augment_patch, AugmentConfig};
pub use consolidate::{consolidate, Consolidation, ConsolidateConfig};
pub use train::{patch_gradients, patch_objective, train, CsvSink, NullSink, StepRecord, TrainConfig, TrainOutcome, TrainSink};
