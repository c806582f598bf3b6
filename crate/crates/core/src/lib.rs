//! Bloch and Wannier bases for finite one-dimensional lattices, coherent
//! superpositions of Bloch states, and simulated site-resolved measurements
//! that read out their relative phase.

pub mod audit;
pub mod bloch;
pub mod eigen;
pub mod error;
pub mod lattice;
pub mod measurement;
pub mod runner;
pub mod state;
pub mod wannier;

pub use error::{Error, Result};
