//! Feature preprocessing: chained-equation imputation, z-scoring, gamma
//! correction of raw pixel grids and PCA with optional whitening.

pub mod gamma;
pub mod mice;
pub mod pca;
pub mod zscore;

pub use gamma::{gamma_correct, read_pgm, GammaMap, GrayImage};
pub use mice::{ImputationModel, ImputeMode, MiceConfig};
pub use pca::{PcaConfig, PcaModel};
pub use zscore::Normalizer;
