//! Training objective, evaluation metric and the AdamW optimizer.

mod adamw;
mod eval;
mod loss;

pub use adamw::{adamw_step, OptimizerConfig, OptimizerState};
pub use eval::{evaluate, predict_segment, score, EvalReport, RoiScore};
pub use loss::{composite_loss, loss_values, pearson_r, LossTerms, PearsonR};
