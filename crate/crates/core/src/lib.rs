//! Laser-anneal frequency trimming of fixed-frequency transmon lattices.
//!
//! Frequencies are in MHz, resistances in Ω, times in ns throughout.

pub mod anneal;
pub mod collision;
pub mod error;
pub mod freq_model;
pub mod gate;
pub mod lattice;
pub mod planner;
pub mod rng;
pub mod synth;
pub mod yield_mc;

pub use error::{Error, Result};
