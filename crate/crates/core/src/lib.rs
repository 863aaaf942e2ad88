pub mod cli;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod graph;
pub mod kv;
pub mod network;
pub mod rng;
pub mod training;
pub mod tensor;

pub use error::{Error, Result};
