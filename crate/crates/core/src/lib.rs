//! Optimal-transport equivariance losses for self-supervised pitch estimation.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod grad;
pub mod io;
pub mod losses;
pub mod model;
pub mod ot;
pub mod trainer;

pub use error::{Error, Result};
