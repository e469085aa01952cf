//! Optimizers, metrics, callbacks, checkpointing and the training loop.

pub mod callback;
pub mod checkpoint;
pub mod history;
pub mod metrics;
pub mod optimizer;
pub mod trainer;

pub use callback::{step_schedule, Callback, CallbackHandle, TrainingControl};
pub use checkpoint::{BestRecord, CheckpointStore};
pub use history::{EpochRecord, Phase, TrainingHistory};
pub use metrics::{is_monitorable, normalize_metric, Direction, Metric, METRICS};
pub use optimizer::{build_optimizer, Clipping, Optimizer, OptimizerKind, OPTIMIZERS};
pub use trainer::{
    class_weight_vector, compute_patience, evaluate_split, per_sample_loss, train, warm_pretrain,
    weighted_mean, EpochMonitor, SplitEvaluation, TrainSettings,
};
