//! Survival modelling, scanning-atom-microscope simulation and parameter
//! inference for single atoms in optical tweezers near a nanophotonic
//! waveguide.

pub mod cli;
pub mod error;
pub mod fieldmodel;
pub mod heating;
pub mod inference;
pub mod quantities;
pub mod rng;
pub mod scanmicroscope;

pub use error::{Error, Result};
