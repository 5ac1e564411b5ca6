//! Classical classifiers over fixed-length feature vectors.
//!
//! Class labels are dense ids `0..num_classes`; rows are plain `Vec<f64>`.

pub mod forest;
pub mod knn;
pub mod standardize;
pub mod svm;

pub use forest::{rf_fit, RfConfig, RfModel};
pub use knn::{knn_fit, KnnConfig, KnnModel};
pub use standardize::Standardizer;
pub use svm::{svm_fit, SvmConfig, SvmModel};
