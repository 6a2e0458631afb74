//! Offline training: loss terms, counterfactual regret targets and the
//! optimization loop.

mod batch;
mod counterfactual;
mod loss;
mod params;
mod train;

pub use batch::{assemble_batch, TrainBatch};
pub use counterfactual::{counterfactual_targets, CounterfactualStats};
pub use loss::{
    combine, entropy_loss, gaussian_entropy, gaussian_nll, mse_loss, nll_loss, predictor_loss, regret_loss,
    regret_weights, utility, LossBreakdown, RegretTargets,
};
pub use params::{default_tau, CroParams, CroSettings, EpisodePrefix};
pub use train::{
    build_loss, dataset_action_bound, init_model, train, write_metrics_csv, LossGraph, MetricsRow, TrainConfig,
    TrainOutcome, Variant,
};
