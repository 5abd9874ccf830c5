//! Data movement implied by a mapping.
//!
//! An operand's tile at level `l` is (re)loaded every time a loop above `l`
//! that indexes the operand advances. Loops that do not index it and sit
//! inside its innermost indexing loop reuse the resident tile. So the number
//! of loads is the product of loop extents from the outermost loop down to
//! the innermost non-unit loop that indexes the operand.
//!
//! Partial sums are written back on every eviction and read back on every
//! revisit except the first, when the tile starts from zero.

use alloc::vec::Vec;

use crate::arch::ArchSpec;
use crate::dim::{Dim, Operand};
use crate::mapspace::Mapping;

/// Movement of one operand across one boundary of its level chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer {
    pub operand: Operand,
    /// The outer level of the pair.
    pub upper: usize,
    /// The inner level of the pair.
    pub lower: usize,
    pub tile_bytes: u64,
    /// Tile residencies at `lower` over the whole run.
    pub refills: u64,
    /// Distinct tiles at `lower`.
    pub distinct: u64,
    /// Transfers upper → lower.
    pub loads: u64,
    /// Transfers lower → upper.
    pub stores: u64,
}

impl Transfer {
    pub fn bytes(&self) -> u64 {
        self.tile_bytes * (self.loads + self.stores)
    }

    pub fn events(&self) -> u64 {
        self.loads + self.stores
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrafficReport {
    pub transfers: Vec<Transfer>,
}

impl TrafficReport {
    pub fn total_bytes(&self) -> u64 {
        self.transfers.iter().map(Transfer::bytes).sum()
    }

    /// Bytes crossing into or out of `lower` from its operands' upper levels.
    pub fn bytes_into(&self, lower: usize) -> u64 {
        self.transfers.iter().filter(|t| t.lower == lower).map(Transfer::bytes).sum()
    }

    pub fn get(&self, operand: Operand, lower: usize) -> Option<&Transfer> {
        self.transfers.iter().find(|t| t.operand == operand && t.lower == lower)
    }
}

/// Temporal loops above the PE level, outermost first, as `(level, dim, extent)`.
pub fn loop_list(m: &Mapping) -> Vec<(usize, Dim, u64)> {
    let mut loops = Vec::new();
    for level in (1..m.levels.len()).rev() {
        for (d, t) in m.levels[level].nonunit_loops() {
            loops.push((level, d, t));
        }
    }
    loops
}

pub fn analyze(m: &Mapping, arch: &ArchSpec) -> TrafficReport {
    let loops = loop_list(m);
    let mut transfers = Vec::new();
    for op in Operand::ALL {
        let chain = arch.chain(op);
        for pair in chain.windows(2) {
            let (lower, upper) = (pair[0], pair[1]);
            let above = loops.iter().filter(|(lv, _, _)| *lv > lower);
            let mut prefix = 1u64;
            let mut refills = 1u64;
            let mut distinct = 1u64;
            for &(_, d, t) in above {
                prefix *= t;
                if op.is_relevant(d) {
                    refills = prefix;
                    distinct *= t;
                }
            }
            let (loads, stores) = match op {
                Operand::Output => (refills - distinct, refills),
                _ => (refills, 0),
            };
            transfers.push(Transfer {
                operand: op,
                upper,
                lower,
                tile_bytes: op.tile_bytes(m.tile(lower)),
                refills,
                distinct,
                loads,
                stores,
            });
        }
    }
    TrafficReport { transfers }
}
