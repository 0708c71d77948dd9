//! Training loop, evaluation, per-image baseline fitting, hyperparameter sweep and checkpoints.

mod checkpoint;
mod evaluate;
mod inr;
mod sweep;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use evaluate::{evaluate, evaluate_with, Evaluation, Stat, Summary};
pub use inr::{evaluate_siren_inr, fit_siren_inr, FitConfig};
pub use sweep::{sweep, Cell, SweepGrid, SweepSpec};
pub use train::{batch_gradient, train, LossCurve, TrainConfig, TrainOutcome};
