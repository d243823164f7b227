//! Desk-scale deterministic training: layers with explicit backward passes,
//! a toy residual classifier, loss, Adam, rank metrics, synthetic data and
//! multi-seed variance experiments.

pub mod data;
pub mod experiment;
pub mod harness;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;

pub use data::{synthetic_task, Dataset, Splits, SyntheticTask, DEFAULT_PREVALENCES};
pub use experiment::{multi_seed_experiment, Arm, ArmSummary, VarianceReport};
pub use harness::{
    evaluate, initial_params, predict, train, train_with_threads, ClassWeighting, EvalRecord, InitChoice, RunResult,
    RunSpec, TrainConfig,
};
pub use layers::{layer_forward_backward, Layer, LayerPass, Signal};
pub use loss::{sqrt_class_weights, weighted_bce};
pub use metrics::{macro_auc, sample_std, welch_t_test, WelchTest};
pub use model::{ToyModel, ToyModelConfig};
