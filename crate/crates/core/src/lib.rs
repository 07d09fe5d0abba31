//! Variationally scheduled adiabatic state preparation on a dense state-vector
//! simulator.

pub mod error;
pub mod evolve;
pub mod experiments;
pub mod operators;
pub mod problems;
pub mod schedule;
pub mod vsqs;

pub use error::{Error, Result};
