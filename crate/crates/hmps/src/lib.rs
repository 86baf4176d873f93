//! File formats, command-line pipeline and demonstration curve for
//! certified MPS tomography, built on `hmps-core`.

pub mod cli;
pub mod demo;
pub mod io;
