pub mod data;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod fk;
pub mod geometry;
pub mod ik;
pub mod koopman;
pub mod params;
pub mod rnn;
pub mod scaling;
pub mod workspace;

pub use error::{Error, Result};
pub use geometry::{derive_translation, ChainId, Pose};
pub use params::RobotParams;
