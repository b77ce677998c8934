pub mod analysis;
pub mod dispersion;
pub mod earth_model;
pub mod error;
pub mod generate;
pub mod inversion;
pub mod kernels;
pub mod parallel;
pub mod pipeline;
pub mod rng;
pub mod surrogate;

pub use error::{Error, Result};
