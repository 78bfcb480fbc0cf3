//! Density-matrix simulation of noisy QAOA circuits and information-content
//! estimates of their gradient landscapes.

pub mod analysis;
pub mod ansatz;
pub mod densmat;
pub mod error;
pub mod experiment;
pub mod icla;
pub mod io;
pub mod noise;
pub mod sampler;
pub mod seed;

pub use error::{Error, Result};
