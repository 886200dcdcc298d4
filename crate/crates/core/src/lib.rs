pub mod ard;
pub mod data;
pub mod dqn;
pub mod error;
pub mod experiment;
pub mod models;
pub mod objective;
pub mod synthetic;

pub use error::{Result, SblError};
