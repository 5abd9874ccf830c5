//! Mapping compiler core for GEMM-based accelerators.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation: the accelerator model, quantized workloads and their
//! graph rewrites, the mapping space and its feasibility predicates, the
//! exact branch-and-bound scheduler, the schedule-space generator, the
//! analytical cost model, and the lowering to a tensorized loop-nest program
//! together with its reference interpreter.
//!
//! File formats and the command-line driver live in the `gemmap` crate.

#![no_std]

extern crate alloc;

pub mod arch;
pub mod costmodel;
pub mod diag;
pub mod dim;
pub mod lowering;
pub mod mapspace;
pub mod pipeline;
pub mod solver;
pub mod spacegen;
pub mod traffic;
pub mod workload;

/// Exact rational used for shares, scales, bandwidths and cycle counts.
pub type Rational = num_rational::Ratio<i64>;

pub use arch::{ArchSpec, DataflowSpec, IntrinsicKind, IntrinsicSpec, MemoryLevel};
pub use diag::{Diagnostic, Severity};
pub use dim::{Dim, Operand};
pub use mapspace::{Mapping, MemoryShares};
pub use workload::{GemmShape, GemmWorkload, TensorValue};
