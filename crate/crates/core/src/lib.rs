#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod checks;
pub mod dataset;
pub mod elastica;
pub mod embed;
pub mod error;
pub mod eval;
pub mod math;
pub mod netcore;
pub mod numerics;
pub mod rng;
pub mod tangent;

pub use error::{Error, Result};
