//! Experiment orchestration behind the command line tool.
//!
//! A run is described by an [`ExperimentConfig`] (TOML). Its outputs live
//! under `output_dir`:
//!
//! ```text
//! features/<feature hash>/  band{i}.sslm, clips.csv, stamp.txt
//! models/<model hash>/      config.toml, stamp.txt,
//!                           fold{t}/band{i}.ckpt, band{i}_log.csv, band{i}_norm.txt
//! evaluation.csv, evaluation/fold{t}_*.csv, table*.csv, fig3.csv
//! ```
//!
//! Directories are keyed by hashes of the settings that produced them, so
//! sweeps reuse features and checkpoints across rows and reruns are no-ops.

mod config;
mod pipeline;
mod report;
mod sweep;
mod toy;

pub use config::{ExperimentConfig, FoldPolicy, FusionSettings, Split, CONFIG_VERSION};
pub use pipeline::{
    band_cache_path, checkpoint_path, cmd_evaluate, cmd_extract, cmd_fusion_curve, cmd_train, evaluate, fold_scores,
    init_stream, split_dir, split_seed, BranchSummary, ClipInfo, ClipPrediction, CurvePoint, Evaluation, ExtractSummary,
    FeatureStore, FoldResult, FoldScores, RunOptions, TrainSummary,
};
pub use report::{mean, ExperimentReport, ReportRow, ReportTable, CODE_VERSION};
pub use sweep::{
    architecture_table, cmd_sweep, flag_product, table_runs, write_architecture_table, RunSpec, DEFAULT_SEGMENTATION_KHZ,
    TABLE1_INNER_KHZ, TABLE5_INNER_KHZ,
};
pub use toy::{generate_toy_dataset, synth_clip, ToySpec};
