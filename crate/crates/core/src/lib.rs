//! Belief-function fusion, information volume of mass functions and
//! evidential segmentation objectives, with a desk-scale two-network
//! semi-supervised training simulator.

pub mod belief;
pub mod cli;
pub mod edl;
pub mod error;
pub mod field;
pub mod fusion;
pub mod info_volume;
pub mod metrics;
pub mod mix;
pub mod trainer;

pub use error::{Error, Result};
