pub mod cli;
pub mod dataset;
pub mod error;
pub mod evalkit;
pub mod flux;
pub mod grf;
pub mod grid;
pub mod inference;
pub mod model;
pub mod prompt;
pub mod rng;
pub mod solver;
pub mod storage;
pub mod training;

pub use error::{Error, Result};
