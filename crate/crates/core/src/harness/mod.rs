//! Training, inference, persistence and the command-line interface.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod eval;
pub mod gradsuite;
pub mod output;
pub mod train;

pub use checkpoint::{Checkpoint, Provenance, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{KeyValues, TrainConfig};
pub use eval::{benchmark, enhance_sequence, evaluate_group, evaluation_frames, Benchmark, Enhancer, GroupEval, SequenceOutput};
pub use gradsuite::{run_grad_suite, CaseReport};
pub use train::{
    draw_bpn_sample, draw_esn_sample, fit_stats, split_groups, train_bpn, train_bpn_direct, train_esn, train_pipeline,
    BpnObjective, BpnSample, BpnTrainer, EpochLog, EsnSample, EsnTrainer, Phase, Split, TrainLog, Trained,
};
