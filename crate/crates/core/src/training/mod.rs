//! Losses, synthetic data, the predictor model and the training loop.

mod ablation;
pub mod data;
pub mod losses;
pub mod model;
mod train;

pub use ablation::{ablate, rows_to_csv, AblationAxis, AblationRow};
pub use data::{make_masked_batch, MaskSpec, MaskedBatch, Span, SyntheticSystem, SystemKind};
pub use losses::{hamilton_loss, jepa_loss, stability_loss, total_loss, LossWeights};
pub use model::{ExpertKind, Model, ModelConfig, MomentumInit, WindowEncoder};
pub use train::{
    heldout_drift, loss_and_grad, objective, train_toy, tree_sum, EpochMetrics, LossParts, TrainConfig, TrainReport,
};
