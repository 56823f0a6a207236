//! Training loop, metrics, cross-validation, significance testing, neighbor
//! cap sweeps and the synthetic data generator.
//!
//! Every run derives its randomness from one base seed: the validation
//! split, per-epoch shuffles and per-step dropout come from the training
//! seed; fold `i` and partition `j` train with seeds derived from the base
//! seed and their index, so any single point can be rerun on its own.

mod kfold;
mod metrics;
mod optim;
mod significance;
mod sweep;
mod synthetic;
mod train;

pub use kfold::{kfold, kfold_partition, mean_std, FoldResult, KFoldReport};
pub use metrics::{
    compute_metrics, evaluate, positive_index, report_from_predictions, BinaryStats, ClassStats, EvalReport, Metrics,
    Prediction,
};
pub use optim::{clip_global_norm, global_norm, learning_rate, Adam};
pub use significance::{paired_t_test, significance_test, PartitionScore, SignificanceReport, TTest};
pub use sweep::{sweep_csv, sweep_neighbor_cap, SweepPoint};
pub use synthetic::{generate_synthetic, synthetic_label, SyntheticSpec};
pub use train::{curve_csv, score_examples, split_validation, train, EpochRecord, TrainOutcome, TrainSpec, CURVE_HEADER};
