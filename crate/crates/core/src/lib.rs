//! Targeted indicator discovery on incomplete survey tables.
//!
//! The pipeline imputes missing cells with kNN, selects features with
//! extra-trees importance and randomized lasso, classifies extreme outcomes
//! with a random forest, explains each subject with a local linear surrogate,
//! clusters the explanations and fits a sparse logistic model per cluster.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod cluster;
pub mod error;
pub mod impute;
pub mod learn;
pub mod lime;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod select;
pub mod synth;
pub mod tabular;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Scalar;

pub type Matrix64 = matrix::Matrix<f64>;
pub type Matrix32 = matrix::Matrix<f32>;
pub type Table64 = tabular::Table<f64>;
pub type Table32 = tabular::Table<f32>;
pub type Tree64 = learn::Tree<f64>;
pub type Tree32 = learn::Tree<f32>;
pub type Forest64 = learn::Forest<f64>;
pub type Forest32 = learn::Forest<f32>;
pub type LinearModel64 = learn::LinearModel<f64>;
pub type LinearModel32 = learn::LinearModel<f32>;
pub type Explanation64 = lime::Explanation<f64>;
pub type Explanation32 = lime::Explanation<f32>;
pub type Clustering64 = cluster::Clustering<f64>;
pub type Clustering32 = cluster::Clustering<f32>;
