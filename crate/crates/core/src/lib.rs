pub mod cli;
pub mod entropy;
pub mod error;
pub mod field;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod real;
pub mod render;
pub mod selection;
pub mod train;

pub use error::{Error, Result};
