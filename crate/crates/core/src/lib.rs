pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod ops;
pub mod training;
pub mod vocab;
pub use error::{Error, Result};
