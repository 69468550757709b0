//! Koopman/EDMD estimator of forward kinematics.

pub mod dictionary;
pub mod model;
pub mod spectral;

pub use dictionary::{Dictionary, LIFTED_DIM, LINEAR_INDICES};
pub use model::{KoopmanModel, Moments, DEFAULT_SVD_THRESHOLD};
pub use spectral::SpectralDecomposition;
