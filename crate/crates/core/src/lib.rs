//! Passive acoustic mapping with a convolutional forward model.

pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod scalar;
pub mod sim;
pub mod solver;

pub use error::{PamError, Result};
pub use scalar::Scalar;

pub type Cube = forward::CavitationCube<f64>;
pub type Rf = forward::RfData<f64>;
