#![no_std]
//! Matrix product state reconstruction from local tomography data, and
//! fidelity certification through parent-Hamiltonian gap bounds.

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod mps;
pub mod oracle;
pub mod reconstruct;
pub mod tomo;
pub mod witness;

pub use error::{Error, Result};
