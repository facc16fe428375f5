//! Desk-scale laboratory for pseudorandom quantum states, one-way state
//! generators and one-way puzzles, built on a dense statevector simulator.

pub mod bits;
pub mod designstats;
pub mod error;
pub mod generators;
pub mod haarstats;
pub mod puzzles;
pub mod reduction;
pub mod rng;
pub mod statevec;
pub mod stats;

pub use bits::Bitstring;
pub use error::{Error, Result};
pub use rng::SeededRng;
pub use statevec::{Circuit, Gate, StateVector};
