pub mod adasyn;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod models;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
