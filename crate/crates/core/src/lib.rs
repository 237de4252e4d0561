//! Simulator for a driven, dissipative hybrid atom–optomechanics system.
//!
//! A membrane, a cavity mode and a two-level atom evolve under a Lindblad
//! master equation while the atom's centre of mass moves classically in two
//! optical lattices. The crate integrates the coupled dynamics, classifies
//! the late-time behaviour as regular, time-crystal or chaotic with the 0-1
//! test, unravels the dynamics into quantum trajectories and computes the
//! cavity's first- and second-order correlation functions.

pub mod chaostest;
pub mod cli;
pub mod correlations;
pub mod dynamics;
pub mod error;
pub mod operators;
pub mod par;
pub mod params;
pub mod sweep;
pub mod trajectories;
pub mod validation;

pub use error::{Result, SimError};
pub use params::SystemParams;
