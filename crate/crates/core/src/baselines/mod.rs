//! Ridge regression from lagged EEG samples to ROI signals.

mod ridge;

pub use ridge::{
    default_lag_taps, default_lambda_grid, fit_ridge_baseline, load_ridge, ridge_features, ridge_fit,
    ridge_predict, save_ridge, Features, LambdaSearch, RidgeModel, RIDGE_MAGIC,
};
