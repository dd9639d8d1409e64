//! Two-stage prognostic engine.
//!
//! Stage 1 stacks three cross-validated base classifiers over clinical
//! biomarkers and image-feature vectors to separate low- from high-risk
//! patients. Stage 2 feeds the base-learner probabilities of high-risk
//! patients into a logistic nomogram that returns a death probability and a
//! points breakdown.

pub mod bundle;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod feature_select;
pub mod history;
pub mod learners;
pub mod linalg;
pub mod matrix;
pub mod nomogram;
pub mod pipeline;
pub mod predict;
pub mod preprocess;
pub mod rng;
pub mod stacking;
pub mod svg;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
