pub mod decompose;
pub mod error;
pub mod masks;
pub mod median;
pub mod noise;
pub mod optimize;
pub mod spectral;
pub mod structure_tensor;
pub mod tsm;

pub use error::{Error, Result};
