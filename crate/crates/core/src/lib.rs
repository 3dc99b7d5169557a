pub mod cli;
pub mod codebook;
pub mod error;
pub mod kalman;
pub mod linpred;
pub mod metrics;
pub mod pipeline;
pub mod pitch;
pub mod signal;
pub mod stp;
pub mod synth;

pub use error::{Error, Result};
