//! Metrics, evaluation, checkpoints and the training loop.

mod checkpoint;
mod eval;
mod metrics;
mod train;


pub use checkpoint::{digest, round_f32, Checkpoint, RunSettings, CHECKPOINT_VERSION};
pub use eval::{
    aggregate, best_of_k, evaluate, evaluate_window, point_metrics, sample_predictions, window_rng, Evaluation,
    MetricsRecord, Sampling, WindowMetrics,
};
pub use metrics::{ade_fde, ade_squared, best_of_samples, SampleChoice};
pub use train::{train, train_with, validation_metrics, LogRecord, Objective, TrainConfig, TrainOutcome};
