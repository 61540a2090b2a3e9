//! Gaussian-process state-space models with particle-filter inference,
//! together with Kalman-filter trend and seasonal decomposition.

pub mod decomp;
pub mod error;
pub mod experiments;
pub mod gp;
pub mod gpssm;
pub mod io;
pub mod kernels;
pub mod linear_ssm;
pub mod optim;
pub mod particle;
pub mod rng;
pub mod systems;
pub mod training;

pub use error::{Error, Result};
pub use gp::{GpDocument, GpModel, Prediction};
pub use kernels::Kernel;
