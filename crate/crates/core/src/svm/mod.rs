//! Two-class kernel SVM with analytic gradients and a calibrated
//! probabilistic output. Label `+1` marks manipulated examples.

mod kernel;
mod model;
mod select;
pub mod smo;

pub use kernel::{dot, sq_dist, Gram, Kernel};
pub use model::{
    fit_slope, load_model, save_model, sigmoid, train_fixed, SvmModel, TrainConfig, TrainReport,
    MANIPULATED, MODEL_SCHEMA_VERSION, ORIGINAL,
};
pub use select::{
    relative_gamma_grid, select_hyperparameters, stratified_folds, train, GridPoint, Selection,
    GAMMA_MULTIPLIERS,
};
