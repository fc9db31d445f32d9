pub mod cli;
pub mod config;
pub mod context;
pub mod data;
pub mod error;
pub mod imageops;
pub mod object;
pub mod refine;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
