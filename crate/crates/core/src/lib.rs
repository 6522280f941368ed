pub mod cli;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod projection;
pub mod reweight;
pub mod simulation;
pub mod tuning;

pub use error::{Error, Result};
