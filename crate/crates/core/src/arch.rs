//! Accelerator model: PE array, memory hierarchy, dataflows, mapping
//! constraints and the intrinsic set.
//!
//! Levels are ordered innermost first. Level 0 is the PE array (the level
//! whose per-dimension loop bound may not exceed `pe_dim`), the last level
//! is off-chip memory with capacity 0 (unbounded). Intermediate levels may
//! skip operands; an operand skipping a level moves directly between the
//! nearest levels that do hold it.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::diag::Diagnostic;
use crate::dim::{Dim, Operand, OperandSet};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub name: String,
    pub pe_dim: u64,
    pub levels: Vec<MemoryLevel>,
    pub dataflows: Vec<DataflowSpec>,
    pub constraints: ConstraintSet,
    pub intrinsics: Vec<IntrinsicSpec>,
    pub supports_double_buffering: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryLevel {
    pub name: String,
    /// 0 means unbounded; only the outermost level may use it.
    pub capacity_bytes: u64,
    pub bandwidth_bytes_per_cycle: Rational,
    pub dma_startup_cycles: u64,
    pub operands_held: OperandSet,
    pub is_pe_level: bool,
}

impl MemoryLevel {
    pub fn is_unbounded(&self) -> bool {
        self.capacity_bytes == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpatialPolicy {
    Forced,
    Forbidden,
    Free,
}

impl SpatialPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SpatialPolicy::Forced => "forced",
            SpatialPolicy::Forbidden => "forbidden",
            SpatialPolicy::Free => "free",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "forced" => Some(SpatialPolicy::Forced),
            "forbidden" => Some(SpatialPolicy::Forbidden),
            "free" => Some(SpatialPolicy::Free),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataflowSpec {
    pub name: String,
    /// Spatial presence at the PE level, indexed by [`Dim::index`].
    pub spatial: [SpatialPolicy; 3],
    pub stationary: Operand,
}

impl DataflowSpec {
    pub fn policy(&self, d: Dim) -> SpatialPolicy {
        self.spatial[d.index()]
    }

    pub fn forced_count(&self) -> usize {
        self.spatial.iter().filter(|p| **p == SpatialPolicy::Forced).count()
    }
}

/// Loop-factor limits for one (level, dimension) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelConstraint {
    pub level: usize,
    pub dim: Dim,
    pub max_spatial: Option<u64>,
    pub max_temporal: Option<u64>,
    /// Exact value required for `spatial · temporal` at this level.
    pub fixed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstraintSet {
    pub entries: Vec<LevelConstraint>,
}

/// All limits that apply to one (level, dimension) pair, merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_spatial: u64,
    pub max_temporal: u64,
    pub fixed: Option<u64>,
}

impl ConstraintSet {
    pub fn limits(&self, level: usize, dim: Dim) -> Limits {
        let mut lim = Limits { max_spatial: u64::MAX, max_temporal: u64::MAX, fixed: None };
        for e in self.entries.iter().filter(|e| e.level == level && e.dim == dim) {
            if let Some(s) = e.max_spatial {
                lim.max_spatial = lim.max_spatial.min(s);
            }
            if let Some(t) = e.max_temporal {
                lim.max_temporal = lim.max_temporal.min(t);
            }
            if e.fixed.is_some() {
                lim.fixed = e.fixed;
            }
        }
        lim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Load,
    Store,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Load => "load",
            Direction::Store => "store",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntrinsicKind {
    Compute {
        /// Largest tile the instruction accepts, indexed by [`Dim::index`].
        max_tile: [u64; 3],
        accumulate: bool,
    },
    Memory {
        direction: Direction,
        operand: Operand,
        src: usize,
        dst: usize,
    },
    Config,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostParams {
    pub fixed_cycles: u64,
    pub per_element_cycles: Rational,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { fixed_cycles: 0, per_element_cycles: Rational::from_integer(0) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntrinsicSpec {
    pub id: String,
    pub kind: IntrinsicKind,
    pub cost: CostParams,
}

impl IntrinsicSpec {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            IntrinsicKind::Compute { .. } => "compute",
            IntrinsicKind::Memory { .. } => "memory",
            IntrinsicKind::Config => "config",
        }
    }
}

impl ArchSpec {
    pub const PE_LEVEL: usize = 0;

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn outermost(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level_index(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.name == name)
    }

    /// Whether `op` is buffered at `level`. The PE array and off-chip memory
    /// always take part in every operand's path.
    pub fn holds(&self, level: usize, op: Operand) -> bool {
        level == Self::PE_LEVEL || level == self.outermost() || self.levels[level].operands_held.contains(op)
    }

    /// Levels holding `op`, innermost first.
    pub fn chain(&self, op: Operand) -> Vec<usize> {
        (0..self.levels.len()).filter(|&l| self.holds(l, op)).collect()
    }

    /// Nearest level above `level` that holds `op`.
    pub fn upper_of(&self, op: Operand, level: usize) -> Option<usize> {
        (level + 1..self.levels.len()).find(|&l| self.holds(l, op))
    }

    /// On-chip, share-managed levels: everything but the PE array and off-chip memory.
    pub fn is_share_level(&self, level: usize) -> bool {
        level != Self::PE_LEVEL && level < self.outermost() && !self.levels[level].is_unbounded()
    }

    pub fn dataflow(&self, name: &str) -> Option<&DataflowSpec> {
        self.dataflows.iter().find(|d| d.name == name)
    }

    pub fn intrinsic(&self, id: &str) -> Option<&IntrinsicSpec> {
        self.intrinsics.iter().find(|i| i.id == id)
    }

    /// First compute intrinsic whose bounds admit `tile`.
    pub fn compute_intrinsic_for(&self, tile: [u64; 3]) -> Option<&IntrinsicSpec> {
        self.intrinsics.iter().find(|i| match i.kind {
            IntrinsicKind::Compute { max_tile, .. } => (0..3).all(|d| tile[d] <= max_tile[d]),
            _ => false,
        })
    }

    pub fn compute_intrinsics(&self) -> impl Iterator<Item = &IntrinsicSpec> {
        self.intrinsics.iter().filter(|i| matches!(i.kind, IntrinsicKind::Compute { .. }))
    }

    pub fn memory_intrinsic(&self, direction: Direction, operand: Operand, src: usize, dst: usize) -> Option<&IntrinsicSpec> {
        self.intrinsics.iter().find(|i| {
            i.kind == IntrinsicKind::Memory { direction, operand, src, dst }
        })
    }

    pub fn config_intrinsics(&self) -> impl Iterator<Item = &IntrinsicSpec> {
        self.intrinsics.iter().filter(|i| i.kind == IntrinsicKind::Config)
    }

    pub fn limits(&self, level: usize, dim: Dim) -> Limits {
        self.constraints.limits(level, dim)
    }
}

/// Check every structural invariant of `spec`. The result is empty iff the
/// spec is fully valid; warnings flag gaps that only matter for lowering.
pub fn validate_arch(spec: &ArchSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if spec.pe_dim < 1 {
        out.push(Diagnostic::error("pe_dim", "must be at least 1"));
    }
    if spec.levels.len() < 2 {
        out.push(Diagnostic::error("levels", "at least two levels are required (PE array and off-chip memory)"));
        return out;
    }
    validate_levels(spec, &mut out);
    validate_dataflows(spec, &mut out);
    validate_constraints(spec, &mut out);
    validate_intrinsics(spec, &mut out);
    out
}

fn validate_levels(spec: &ArchSpec, out: &mut Vec<Diagnostic>) {
    let mut names = BTreeSet::new();
    let pe_levels: Vec<usize> = spec.levels.iter().enumerate().filter(|(_, l)| l.is_pe_level).map(|(i, _)| i).collect();
    match pe_levels.as_slice() {
        [] => out.push(Diagnostic::error("levels", "no level is flagged pe_level")),
        [0] => {}
        [i] => out.push(Diagnostic::error(format!("levels[{i}].pe_level"), "the PE-array level must be the innermost level")),
        _ => out.push(Diagnostic::error("levels", format!("{} levels are flagged pe_level; exactly one is allowed", pe_levels.len()))),
    }
    let unbounded: Vec<usize> = spec.levels.iter().enumerate().filter(|(_, l)| l.is_unbounded()).map(|(i, _)| i).collect();
    let last = spec.levels.len() - 1;
    match unbounded.as_slice() {
        [] => out.push(Diagnostic::error(format!("levels[{last}].capacity_bytes"), "the outermost level must be off-chip (capacity 0)")),
        [i] if *i == last => {}
        [i] => out.push(Diagnostic::error(format!("levels[{i}].capacity_bytes"), "only the outermost level may have capacity 0")),
        _ => out.push(Diagnostic::error(
            "levels",
            format!("{} levels have capacity 0; exactly one (the outermost) is allowed", unbounded.len()),
        )),
    }
    for (i, l) in spec.levels.iter().enumerate() {
        if !names.insert(l.name.as_str()) {
            out.push(Diagnostic::error(format!("levels[{i}].name"), format!("duplicate level name `{}`", l.name)));
        }
        if l.bandwidth_bytes_per_cycle <= Rational::from_integer(0) {
            out.push(Diagnostic::error(format!("levels[{i}].bandwidth_bytes_per_cycle"), "must be positive"));
        }
        if (i == 0 || i == last) && l.operands_held != OperandSet::ALL {
            out.push(Diagnostic::error(
                format!("levels[{i}].operands"),
                "the PE array and off-chip memory must hold input, weight and output",
            ));
        }
    }
}

fn validate_dataflows(spec: &ArchSpec, out: &mut Vec<Diagnostic>) {
    if spec.dataflows.is_empty() {
        out.push(Diagnostic::error("dataflows", "at least one dataflow is required"));
    }
    let mut names = BTreeSet::new();
    for (i, df) in spec.dataflows.iter().enumerate() {
        if !names.insert(df.name.as_str()) {
            out.push(Diagnostic::error(format!("dataflows[{i}].name"), format!("duplicate dataflow `{}`", df.name)));
        }
        if df.forced_count() > 2 {
            out.push(Diagnostic::error(
                format!("dataflows[{i}].spatial"),
                format!("{} dimensions forced spatial; a 2-D array admits at most 2", df.forced_count()),
            ));
        }
    }
}

fn validate_constraints(spec: &ArchSpec, out: &mut Vec<Diagnostic>) {
    for (i, c) in spec.constraints.entries.iter().enumerate() {
        if c.level >= spec.levels.len() {
            out.push(Diagnostic::error(format!("constraints[{i}].level"), "unknown level"));
            continue;
        }
        if let Some(s) = c.max_spatial {
            if c.level == ArchSpec::PE_LEVEL && s > spec.pe_dim {
                out.push(Diagnostic::error(
                    format!("constraints[{i}].max_spatial"),
                    format!("{s} exceeds pe_dim {}", spec.pe_dim),
                ));
            }
            if c.level != ArchSpec::PE_LEVEL && s > 1 {
                out.push(Diagnostic::error(
                    format!("constraints[{i}].max_spatial"),
                    "spatial mapping is only available at the PE level",
                ));
            }
        }
        for (field, v) in [("max_spatial", c.max_spatial), ("max_temporal", c.max_temporal), ("fixed", c.fixed)] {
            if v == Some(0) {
                out.push(Diagnostic::error(format!("constraints[{i}].{field}"), "must be at least 1"));
            }
        }
        if let Some(f) = c.fixed {
            if c.level == ArchSpec::PE_LEVEL && f > spec.pe_dim {
                out.push(Diagnostic::error(format!("constraints[{i}].fixed"), format!("{f} exceeds pe_dim {}", spec.pe_dim)));
            }
        }
    }
}

fn validate_intrinsics(spec: &ArchSpec, out: &mut Vec<Diagnostic>) {
    let mut ids = BTreeSet::new();
    let mut has_compute = false;
    for (i, intr) in spec.intrinsics.iter().enumerate() {
        if !ids.insert(intr.id.as_str()) {
            out.push(Diagnostic::error(format!("intrinsics[{i}].id"), format!("duplicate intrinsic `{}`", intr.id)));
        }
        match &intr.kind {
            IntrinsicKind::Compute { max_tile, .. } => {
                has_compute = true;
                for d in Dim::ALL {
                    let b = max_tile[d.index()];
                    if b == 0 || b > spec.pe_dim {
                        out.push(Diagnostic::error(
                            format!("intrinsics[{i}].max_tile.{d}"),
                            format!("bound {b} must lie in 1..={}", spec.pe_dim),
                        ));
                    }
                }
                if intr.cost.per_element_cycles < Rational::from_integer(1) {
                    out.push(Diagnostic::error(
                        format!("intrinsics[{i}].cost_params.per_element_cycles"),
                        "compute throughput cannot exceed one MAC per PE per cycle (need >= 1)",
                    ));
                }
            }
            IntrinsicKind::Memory { direction, operand, src, dst } => {
                let (src, dst) = (*src, *dst);
                if src >= spec.levels.len() || dst >= spec.levels.len() {
                    out.push(Diagnostic::error(format!("intrinsics[{i}]"), "references an unknown level"));
                    continue;
                }
                let path = format!("intrinsics[{i}]");
                if !spec.holds(src, *operand) || !spec.holds(dst, *operand) {
                    out.push(Diagnostic::error(
                        path.clone(),
                        format!("{operand} is not held at both `{}` and `{}`", spec.levels[src].name, spec.levels[dst].name),
                    ));
                    continue;
                }
                let (lo, hi) = if src < dst { (src, dst) } else { (dst, src) };
                if spec.upper_of(*operand, lo) != Some(hi) {
                    out.push(Diagnostic::error(path.clone(), "memory intrinsics must connect adjacent levels"));
                }
                match direction {
                    Direction::Load if src < dst => {
                        out.push(Diagnostic::error(path, "a load moves data from an outer level to an inner one"));
                    }
                    Direction::Store if src > dst => {
                        out.push(Diagnostic::error(path, "a store moves data from an inner level to an outer one"));
                    }
                    Direction::Store if *operand != Operand::Output => {
                        out.push(Diagnostic::error(path, "only the output operand is stored"));
                    }
                    _ => {}
                }
            }
            IntrinsicKind::Config => {}
        }
    }
    if !has_compute {
        out.push(Diagnostic::warning("intrinsics", "no compute intrinsic; programs cannot be tensorized"));
    }
}

/// A Gemmini-like target: a 16×16 systolic array with a 256 KiB
/// input/weight scratchpad and a separate 64 KiB output accumulator.
///
/// Bandwidths, DMA start-up and intrinsic cycle counts are placeholders
/// chosen to be plausible, not measured values.
pub fn gemmini_like() -> ArchSpec {
    use alloc::string::ToString;
    use Operand::*;
    let lvl = |name: &str, cap: u64, bw: i64, startup: u64, ops: &[Operand], pe: bool| MemoryLevel {
        name: name.to_string(),
        capacity_bytes: cap,
        bandwidth_bytes_per_cycle: Rational::from_integer(bw),
        dma_startup_cycles: startup,
        operands_held: OperandSet::from_slice(ops),
        is_pe_level: pe,
    };
    let cost = |fixed: u64, per: (i64, i64)| CostParams { fixed_cycles: fixed, per_element_cycles: Rational::new(per.0, per.1) };
    let mem = |id: &str, direction: Direction, operand: Operand, src: usize, dst: usize| IntrinsicSpec {
        id: id.to_string(),
        kind: IntrinsicKind::Memory { direction, operand, src, dst },
        cost: cost(2, (0, 1)),
    };
    let (reg, spm, acc, dram) = (0, 1, 2, 3);
    ArchSpec {
        name: "gemmini-like".to_string(),
        pe_dim: 16,
        levels: alloc::vec![
            lvl("registers", 1536, 64, 0, &[Input, Weight, Output], true),
            lvl("scratchpad", 262_144, 64, 4, &[Input, Weight], false),
            lvl("accumulator", 65_536, 64, 4, &[Output], false),
            lvl("dram", 0, 16, 100, &[Input, Weight, Output], false),
        ],
        dataflows: alloc::vec![
            DataflowSpec {
                name: "ws".to_string(),
                spatial: [SpatialPolicy::Forbidden, SpatialPolicy::Forced, SpatialPolicy::Forced],
                stationary: Weight,
            },
            DataflowSpec {
                name: "os".to_string(),
                spatial: [SpatialPolicy::Forced, SpatialPolicy::Forbidden, SpatialPolicy::Forced],
                stationary: Output,
            },
        ],
        constraints: ConstraintSet::default(),
        intrinsics: alloc::vec![
            IntrinsicSpec { id: "config_ex".to_string(), kind: IntrinsicKind::Config, cost: cost(10, (0, 1)) },
            IntrinsicSpec {
                id: "matmul".to_string(),
                kind: IntrinsicKind::Compute { max_tile: [16, 16, 16], accumulate: true },
                cost: cost(8, (1, 1)),
            },
            mem("mvin_input", Direction::Load, Input, dram, spm),
            mem("mvin_weight", Direction::Load, Weight, dram, spm),
            mem("preload_input", Direction::Load, Input, spm, reg),
            mem("preload_weight", Direction::Load, Weight, spm, reg),
            mem("mvin_acc", Direction::Load, Output, dram, acc),
            mem("preload_acc", Direction::Load, Output, acc, reg),
            mem("flush_acc", Direction::Store, Output, reg, acc),
            mem("mvout", Direction::Store, Output, acc, dram),
        ],
        supports_double_buffering: true,
    }
}
