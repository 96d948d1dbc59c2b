//! Speech production with an LF glottal source and a pole-zero (ARMAX) vocal
//! tract: synthesis, closed-form vocal-tract identification, and a two-stage
//! estimator that predicts LF parameters with a small neural network before
//! fitting the vocal tract without iteration.

pub mod cli;
pub mod config;
pub mod dataset;
mod error;
pub mod frontend;
pub mod lf;
pub mod lpc;
pub mod nn;
pub mod pipeline;
pub mod vocal_tract;
mod waveform;

pub use error::{Error, Result};
pub use lf::{generate_cycle, generate_train, solve_direct, DiscreteGrid, LfDirect, LfParams};
pub use waveform::Waveform;
