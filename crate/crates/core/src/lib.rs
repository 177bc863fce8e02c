pub mod error;
pub mod fem;
pub mod filtering;
pub mod interpolation;
mod linalg;
pub mod mma;
pub mod output;
pub mod config;
pub mod driver;
pub mod problem;

pub use error::{Error, Result};
