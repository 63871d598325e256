// `!(x > 0.0)` is used on purpose so NaN falls into the rejecting branch.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::type_complexity
)]

pub mod detector;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod reduction;
pub mod seed;
pub mod stats;
pub mod synthetic;
pub mod theory_attack;

pub use error::{Error, Result};
pub use synthetic::{GaussianHypothesisModel, Hypothesis, Regime};
pub mod corpus;
pub mod harness;
pub mod image;
pub mod manipulation;
pub mod ml_attack;
pub mod spam;
pub mod svm;
