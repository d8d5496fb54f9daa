//! Multi-lane traffic speed forecasting with a two-stream convolutional network.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod io;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod synth;
pub mod tensor;
pub mod train;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
