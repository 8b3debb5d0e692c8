//! Supervised learners: CART and extremely randomized trees, random forests,
//! and L1-regularized logistic regression.

pub mod dot;
pub mod forest;
pub mod logistic;
pub mod metrics;
pub mod tree;

pub use dot::export_dot;
pub use forest::{fit_forest, fit_forest_with, Forest, ForestParams};
pub use logistic::{
    fit_logistic_l1, fit_logistic_path, fit_logistic_warm, LinearModel, LogisticFit, LogisticParams,
};
pub use metrics::{accuracy, adjusted_rand_index, mse};
pub use tree::{fit_cart, grow_tree, GrowParams, Splitter, Task, Tree};
