//! Dimensionality reduction and linear classification.

mod linalg;
pub mod oracle;
mod pca;
mod svm;

use thiserror::Error;

pub use linalg::{dot, symmetric_eigen, SymmetricEigen};
pub use pca::{pca_fit, pca_fit_with, pca_project, pca_reconstruct, PcaMethod, PcaModel};
pub use svm::{
    svm_predict, svm_train, svm_train_with, Class, LabelMap, Sample, SvmModel, SvmParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("non-finite feature value in sample {0}")]
    NonFinite(usize),
    #[error("instance too large for the reference solver: {0}")]
    TooLarge(String),
}
