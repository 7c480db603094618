pub mod comms;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod harness;
pub mod heterogeneous;
pub mod homogeneous;
pub mod params;
pub mod rng;
pub mod sampling;
pub mod scenario;

pub use error::{Error, Result};
