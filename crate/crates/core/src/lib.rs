pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod nca;
pub mod training;
pub mod uncertainty;

pub use error::{Error, Result};
