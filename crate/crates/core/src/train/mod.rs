//! Training loop, early stopping, evaluation, metrics, reports and gradient
//! checking.

mod early_stop;
mod evaluate;
mod fit;
mod gradcheck;
mod metrics;
mod report;

pub use early_stop::{EarlyStopping, EpochVerdict};
pub use evaluate::{evaluate, predict_files, predict_tensors, EvalReport, Prediction};
pub use fit::{
    epoch_order, train, BatchSource, EpochStats, InMemorySource, ManifestSource, TrainConfig,
    TrainOutcome,
};
pub use gradcheck::{
    compare, gradient_check, GradCheckConfig, GradCheckProblem, GradCheckReport, GroupError,
};
pub use metrics::{metrics_from_confusion, ConfusionMatrix, Metrics};
pub use report::{confusion_csv, emit_reports, history_csv, metrics_json};
