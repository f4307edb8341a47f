pub mod error;
pub mod fock;
pub mod interferometer;
pub mod permanent;

pub use error::{Error, Result};
