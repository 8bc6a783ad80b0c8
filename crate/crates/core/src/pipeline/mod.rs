//! Training with step-decayed SGD, evaluation, attention reports and the
//! margin / region-size / head sweeps.

mod config;
mod data;
mod eval;
mod sweep;
mod train;

pub use config::TrainConfig;
pub use data::{derive_seed, Dataset, Example, PreparedSet, Source};
pub use eval::{
    attention_report, display_weights, evaluate, mean_margin, predict_all, AttentionReport,
    AttentionRow, Metrics, SampleWeights,
};
pub use sweep::{compare_heads, margin_sweep, region_size_sweep, sweep_csv, HeadResult, SweepRow};
pub use train::{
    build_model, epoch_log_csv, train, train_and_evaluate, train_with, EpochLog, RunResult,
};
