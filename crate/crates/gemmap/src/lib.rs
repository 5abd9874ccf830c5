//! File formats and command-line driver for the `gemmap` mapping compiler.
//!
//! The compiler itself lives in `gemmap-core`; this crate reads and writes
//! its YAML documents and wires the pipeline into the `gemmap` binary.

pub mod cli;
pub mod formats;
