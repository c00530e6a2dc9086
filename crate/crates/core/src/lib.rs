pub mod autograd;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod losses;
pub mod metrics;
pub mod netarch;
pub mod synthdata;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
