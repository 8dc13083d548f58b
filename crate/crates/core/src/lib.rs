//! Facial expression analysis with action-unit driven search-space pruning.
//!
//! The crate is split along the processing chain:
//!
//! - [`facegeo`]: the 24-point face model, similarity normalization and the
//!   cumulative intensity difference.
//! - [`faucodes`]: action units, emotions and the static AU tables.
//! - [`ruleengine`]: AU-set classification, induced decision trees and
//!   monitoring plans that pick the feature points worth observing.
//! - [`mlcore`]: PCA and a linear soft-margin SVM.
//! - [`imaging`]: PGM I/O, resizing, Canny edges and landmark patches.
//! - [`synthgen`]: a seeded synthetic face generator.
//! - [`pipeline`]: training, full and pruned classification, transition
//!   detection, benchmarking and model persistence.
//! - [`cli`]: the `faup` command line.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod facegeo;
pub mod faucodes;
pub mod imaging;
pub mod mlcore;
pub mod pipeline;
pub mod ruleengine;
pub mod synthgen;
