//! Gray-box SOC forecasting model, black-box baselines, and the shared
//! training/evaluation machinery.

pub mod baselines;
pub mod trainer;
pub mod vbnet;

pub use baselines::{Baseline, BaselineKind};
pub use trainer::{
    eval_rmse, evaluate, train, EvalReport, SocModel, TrainConfig, TrainError, TrainReport,
};
pub use vbnet::{composite_loss, ModelError, NetOutput, VbNet};
