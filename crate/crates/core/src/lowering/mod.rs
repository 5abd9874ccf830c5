//! From a mapping to an executable, tensorized program.
//!
//! [`lower_mapping`] builds the tiled loop nest with tile moves hoisted to
//! where each tile stays invariant, [`tensorize`] swaps the scalar PE body for
//! a compute-intrinsic call, [`interpret`] runs the result against simulated
//! buffers and [`emit_trace`] prints the intrinsic stream.
//!
//! Trace grammar, one intrinsic per line:
//!
//! ```text
//! CONFIG id=<id> dataflow=<name>
//! MVIN id=<id|-> op=<operand> src=<level>:<byte> dst=<level>:<byte> shape=<R>x<C> bytes=<n>
//! COMPUTE id=<id> n=<off>:<len> c=<off>:<len> k=<off>:<len> acc=<0|1>
//! MVOUT id=<id|-> op=output src=<level>:<byte> dst=<level>:<byte> shape=<R>x<C> bytes=<n> final=<0|1>
//! ```
//!
//! On-chip byte offsets are addresses within the level; off-chip offsets are
//! row-major offsets into the operand's tensor (int32 partial sums for
//! outputs). An output tile visited for the first time starts from zero, so
//! no `MVIN` is issued for it.

mod exec;
mod ir;

pub use exec::{emit_trace, interpret, interpret_traced, trace_bytes};
pub use ir::{lower_mapping, tensorize, Loop, LoopKind, MemOp, Node, Program, Region};

use alloc::string::String;
use alloc::vec::Vec;

use crate::dim::{Dim, Operand};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LowerError {
    #[error("mapping has {mapping} levels but the architecture has {arch}")]
    LevelMismatch { mapping: usize, arch: usize },
    #[error("mapping tiles do not cover the problem")]
    NotCovering,
    #[error("no compute intrinsic admits tile {tile:?}: {dim} extent exceeds {bound}")]
    TileTooLarge { dim: Dim, tile: [u64; 3], bound: u64 },
    #[error("the architecture declares no compute intrinsic")]
    NoComputeIntrinsic,
    #[error("compute intrinsic `{0}` cannot accumulate but the reduction is split")]
    NoAccumulate(String),
    #[error("program still contains scalar compute; tensorize it first")]
    NotTensorized,
    #[error("uninitialized read of {} at {level}, byte {offset}", .operand.name())]
    UninitializedRead { level: String, operand: Operand, offset: u64 },
    #[error("no {} tile is resident at {level}", .operand.name())]
    NotResident { level: String, operand: Operand },
    #[error("access outside the resident {} tile at {level}", .operand.name())]
    OutsideTile { level: String, operand: Operand },
    #[error("{} tile of {needed} bytes exceeds its {available}-byte buffer at {level}", .operand.name())]
    BudgetOverflow { level: String, operand: Operand, needed: u64, available: u64 },
    #[error("input shape {got:?} does not match {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("input must be int8")]
    InputType,
    #[error("output element {0} was never written")]
    IncompleteOutput(usize),
}
