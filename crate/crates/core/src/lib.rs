pub mod asymptotics;
pub mod distributions;
pub mod error;
pub mod model;
pub mod predict;
pub mod simulate;

pub use error::{Error, Result};
