//! Comparison learners: k-nearest neighbours, random forest, and a small
//! feedforward network. All three expose probability scores so the same AUC
//! estimator applies uniformly.

mod forest;
mod knn;
mod mlp;

pub use forest::{gini_impurity, ForestModel};
pub use knn::{minkowski_distance, KnnModel};
pub use mlp::{mlp_forward, mlp_train, MlpConfig, MlpModel};
