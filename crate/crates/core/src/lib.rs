//! Lattice simulation toolkit for half-space discrete KPZ growth models,
//! their directed-polymer counterpart, and the Robin-boundary stochastic
//! heat equation they approximate.

pub mod error;
pub mod growth;
pub mod harness;
pub mod kernels;
pub mod noise;
pub mod polymer;
pub mod she;
pub mod stats;

pub use error::{LabError, Result};
