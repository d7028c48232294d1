pub mod averaging;
pub mod consensus;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod localize;
pub mod pipeline;
pub mod refine;
pub mod relative;
pub mod sim;

pub use error::{Error, Result};
