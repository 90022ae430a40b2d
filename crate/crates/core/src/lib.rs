pub mod error;
pub mod attention;
pub mod dataset;
pub mod detectors;
pub mod evaluation;
pub mod models;
pub mod pipeline;
pub mod signal;

pub use error::{CoreError, Result};
