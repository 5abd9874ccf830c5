//! Analytical latency model used to rank schedule candidates.
//!
//! Latency composes bottom-up. The innermost step is one compute-intrinsic
//! call on a PE tile. At level `i ≥ 1` each of the level's `trips` loop
//! iterations moves the data feeding level `i-1` (`t_xfer`, averaged over
//! all iterations of the level) and then runs level `i-1` (`t_comp`).
//!
//! With double buffering the next transfer overlaps the current compute:
//! one fill transfer, then `trips` steady-state steps of `max(t_xfer, t_comp)`.
//! When a level has so few trips that the fill transfer dominates, that
//! estimate can exceed the serial schedule; the buffers never make things
//! slower than running serially, so the level takes the smaller of the two.
//!
//! Traffic comes from [`crate::traffic::analyze`], the same refill counts
//! the solver optimizes. Host preprocessing is not modeled.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::arch::{ArchSpec, CostParams, Direction};
use crate::dim::Operand;
use crate::mapspace::Mapping;
use crate::spacegen::ScheduleCandidate;
use crate::traffic::{self, Transfer};
use crate::workload::GemmShape;
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelCost {
    pub level: usize,
    /// Temporal iterations of this level per execution of the level above.
    pub trips: u64,
    /// Transfer cycles per iteration into the level below.
    pub transfer_cycles: Rational,
    /// Cycles of one execution of the level below.
    pub inner_cycles: Rational,
    /// Cycles of one execution of this level.
    pub latency: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryTraffic {
    pub operand: Operand,
    pub upper: usize,
    pub lower: usize,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub total_cycles: Rational,
    /// Levels 1 and up, innermost first.
    pub levels: Vec<LevelCost>,
    pub compute_cycles: Rational,
    pub pe_utilization: Rational,
    pub traffic: Vec<BoundaryTraffic>,
}

impl CostReport {
    pub fn traffic_bytes(&self) -> u64 {
        self.traffic.iter().map(|t| t.bytes).sum()
    }
}

/// Latency of one execution of a level.
pub fn level_latency(trips: u64, t_xfer: Rational, t_comp: Rational, double_buffered: bool) -> Rational {
    let n = Rational::from_integer(trips as i64);
    let serial = n * (t_xfer + t_comp);
    if double_buffered {
        let pipelined = t_xfer + n * t_xfer.max(t_comp);
        pipelined.min(serial)
    } else {
        serial
    }
}

/// `MACs / DIM²`: no schedule can beat a fully busy array.
pub fn compute_lower_bound(shape: GemmShape, arch: &ArchSpec) -> Rational {
    Rational::new(shape.macs() as i64, (arch.pe_dim * arch.pe_dim) as i64)
}

fn int(x: u64) -> Rational {
    Rational::from_integer(x as i64)
}

/// Cycles of one compute-intrinsic call on the PE tile of `m`.
pub fn compute_call_cycles(m: &Mapping, arch: &ArchSpec) -> Rational {
    let tile = m.tile(ArchSpec::PE_LEVEL);
    let macs: u64 = tile.iter().product();
    let parallel: u64 = m.levels[ArchSpec::PE_LEVEL].spatial.iter().product::<u64>().min(arch.pe_dim * arch.pe_dim);
    let default = CostParams { fixed_cycles: 0, per_element_cycles: Rational::from_integer(1) };
    let cost = arch.compute_intrinsic_for(tile).map_or(&default, |i| &i.cost);
    int(cost.fixed_cycles) + cost.per_element_cycles * int(macs) / int(parallel.max(1))
}

fn transfer_cycles(t: &Transfer, arch: &ArchSpec) -> Rational {
    let up = &arch.levels[t.upper];
    let elems = t.tile_bytes / t.operand.elem_bytes();
    let mut cycles = Rational::from_integer(0);
    for (count, direction, src, dst) in [(t.loads, Direction::Load, t.upper, t.lower), (t.stores, Direction::Store, t.lower, t.upper)] {
        if count == 0 {
            continue;
        }
        let intr = arch.memory_intrinsic(direction, t.operand, src, dst).map(|i| &i.cost);
        let fixed = int(up.dma_startup_cycles + intr.map_or(0, |c| c.fixed_cycles));
        let per_elem = intr.map_or(Rational::from_integer(0), |c| c.per_element_cycles);
        let per_event = fixed + int(t.tile_bytes) / up.bandwidth_bytes_per_cycle + per_elem * int(elems);
        cycles += per_event * int(count);
    }
    cycles
}

pub fn estimate_latency(m: &Mapping, shape: GemmShape, arch: &ArchSpec) -> CostReport {
    let report = traffic::analyze(m, arch);
    let call = compute_call_cycles(m, arch);
    let calls: u64 = m.levels.iter().map(|l| l.trips()).product::<u64>() / m.levels[ArchSpec::PE_LEVEL].trips();
    let mut levels = Vec::new();
    let mut inner = call;
    for i in 1..m.levels.len() {
        let trips = m.levels[i].trips();
        let executions: u64 = m.levels[i..].iter().map(|l| l.trips()).product();
        let total: Rational = report.transfers.iter().filter(|t| t.lower == i - 1).map(|t| transfer_cycles(t, arch)).sum();
        let t_xfer = total / int(executions.max(1));
        let latency = level_latency(trips, t_xfer, inner, m.double_buffered);
        levels.push(LevelCost { level: i, trips, transfer_cycles: t_xfer, inner_cycles: inner, latency });
        inner = latency;
    }
    let compute_cycles = call * int(calls);
    let pe_utilization = compute_lower_bound(shape, arch) / compute_cycles;
    let traffic = report
        .transfers
        .iter()
        .map(|t| BoundaryTraffic { operand: t.operand, upper: t.upper, lower: t.lower, bytes: t.bytes() })
        .collect();
    CostReport { total_cycles: inner, levels, compute_cycles, pe_utilization, traffic }
}

/// Fills in every candidate's latency and sorts by total cycles, then proxy
/// cost, tie key and tuning point. The order does not depend on the input order.
pub fn rank_candidates(cs: &mut Vec<ScheduleCandidate>, shape: GemmShape, arch: &ArchSpec) {
    for c in cs.iter_mut() {
        if c.latency.is_none() {
            c.latency = Some(estimate_latency(&c.mapping, shape, arch));
        }
    }
    let mut keyed: Vec<_> = cs.drain(..).map(|c| (c.mapping.tie_key(), c)).collect();
    keyed.sort_by(|(ka, a), (kb, b)| rank_cmp(a, ka, b, kb));
    cs.extend(keyed.into_iter().map(|(_, c)| c));
}

fn rank_cmp(a: &ScheduleCandidate, ka: &[u64], b: &ScheduleCandidate, kb: &[u64]) -> Ordering {
    let cycles = |c: &ScheduleCandidate| c.latency.as_ref().map(|l| l.total_cycles);
    cycles(a)
        .cmp(&cycles(b))
        .then(a.proxy_cost.cmp(&b.proxy_cost))
        .then_with(|| ka.cmp(kb))
        .then_with(|| a.tuning.cmp(&b.tuning))
}
