use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::LowerError;
use crate::arch::{ArchSpec, Direction, IntrinsicKind};
use crate::dim::{Dim, Operand};
use crate::mapspace::Mapping;
use crate::workload::GemmWorkload;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopKind {
    Spatial,
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loop {
    pub dim: Dim,
    pub extent: u64,
    /// Elements of `dim` covered by one iteration.
    pub step: u64,
    pub level: usize,
    pub kind: LoopKind,
    pub body: Vec<Node>,
}

/// A tile move across one level boundary of an operand's chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemOp {
    pub operand: Operand,
    pub upper: usize,
    pub lower: usize,
    /// Memory intrinsic implementing the move, if the arch declares one.
    pub intrinsic: Option<String>,
    /// Reduction extent one residency of the lower tile spans (outputs only):
    /// a residency starting at C offset 0 starts from zero instead of a
    /// readback, and one reaching the end of C holds final sums.
    pub c_window: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Loop(Loop),
    Load(MemOp),
    Store(MemOp),
    /// Scalar multiply-accumulate; the generic body before tensorization.
    Mac,
    /// One compute-intrinsic call over the whole PE tile.
    Compute { intrinsic: String },
}

/// Byte range one operand owns at one on-chip level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub base: u64,
    /// Usable bytes per buffer (half the share under double buffering).
    pub size: u64,
    pub double_buffered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    /// Configuration intrinsics issued once before the nest.
    pub config: Vec<String>,
    pub dataflow: String,
    pub mapping: Mapping,
    pub workload: GemmWorkload,
    pub body: Vec<Node>,
    pub level_names: Vec<String>,
    /// Bytes of each on-chip level (`None` for off-chip memory).
    pub level_bytes: Vec<Option<u64>>,
    /// Per level and operand, where its tiles live.
    pub regions: Vec<[Option<Region>; 3]>,
}

impl Program {
    pub fn is_tensorized(&self) -> bool {
        fn has_mac(nodes: &[Node]) -> bool {
            nodes.iter().any(|n| match n {
                Node::Mac => true,
                Node::Loop(l) => has_mac(&l.body),
                _ => false,
            })
        }
        !has_mac(&self.body)
    }

    pub fn outermost(&self) -> usize {
        self.level_names.len() - 1
    }

    /// Indented text form of the loop nest.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.config {
            let _ = writeln!(s, "config {c}");
        }
        render_nodes(&mut s, &self.body, 0, &self.level_names);
        s
    }
}

fn render_nodes(s: &mut String, nodes: &[Node], depth: usize, names: &[String]) {
    for n in nodes {
        let pad = depth * 2;
        match n {
            Node::Loop(l) => {
                let kind = match l.kind {
                    LoopKind::Spatial => "spatial",
                    LoopKind::Temporal => "for",
                };
                let _ = writeln!(s, "{:pad$}{kind} {} in 0..{} step {} @{}", "", l.dim.name(), l.extent, l.step, names[l.level]);
                render_nodes(s, &l.body, depth + 1, names);
            }
            Node::Load(m) => {
                let _ = writeln!(s, "{:pad$}load {} {} -> {}", "", m.operand.name(), names[m.upper], names[m.lower]);
            }
            Node::Store(m) => {
                let _ = writeln!(s, "{:pad$}store {} {} -> {}", "", m.operand.name(), names[m.lower], names[m.upper]);
            }
            Node::Mac => {
                let _ = writeln!(s, "{:pad$}mac", "");
            }
            Node::Compute { intrinsic } => {
                let _ = writeln!(s, "{:pad$}compute {intrinsic}", "");
            }
        }
    }
}

struct FlatLoop {
    dim: Dim,
    extent: u64,
    level: usize,
    kind: LoopKind,
}

fn regions(m: &Mapping, arch: &ArchSpec) -> Vec<[Option<Region>; 3]> {
    let dim2 = arch.pe_dim * arch.pe_dim;
    (0..arch.num_levels())
        .map(|l| {
            let mut row = [None; 3];
            if l == ArchSpec::PE_LEVEL {
                let mut base = 0;
                for op in Operand::ALL {
                    let size = dim2 * op.elem_bytes();
                    row[op.index()] = Some(Region { base, size, double_buffered: false });
                    base += size;
                }
            } else if arch.is_share_level(l) {
                let cap = arch.levels[l].capacity_bytes as i128;
                let mut before = crate::Rational::from_integer(0);
                for op in arch.levels[l].operands_held.iter() {
                    let share = m.shares.get(l, op).unwrap_or(crate::Rational::from_integer(0));
                    let floor = |r: crate::Rational| ((*r.numer() as i128 * cap) / *r.denom() as i128) as u64;
                    let size = floor(share);
                    let size = if m.double_buffered { size / 2 } else { size };
                    row[op.index()] = Some(Region { base: floor(before), size, double_buffered: m.double_buffered });
                    before += share;
                }
            }
            row
        })
        .collect()
}

/// Builds the loop nest that realizes `m`: temporal loops of each level
/// above the PE array outermost first in the level's order, then the PE
/// array's temporal and spatial loops around a scalar body. Each operand's
/// tile at a level is loaded in the body of the innermost loop above that
/// level that indexes the operand, i.e. as far out as it stays unchanged.
pub fn lower_mapping(m: &Mapping, w: &GemmWorkload, arch: &ArchSpec) -> Result<Program, LowerError> {
    if m.levels.len() != arch.num_levels() {
        return Err(LowerError::LevelMismatch { mapping: m.levels.len(), arch: arch.num_levels() });
    }
    if !m.covers(w.shape) {
        return Err(LowerError::NotCovering);
    }
    let mut flat = Vec::new();
    for level in (1..m.levels.len()).rev() {
        for (dim, extent) in m.levels[level].nonunit_loops() {
            flat.push(FlatLoop { dim, extent, level, kind: LoopKind::Temporal });
        }
    }
    let pe = &m.levels[ArchSpec::PE_LEVEL];
    for d in Dim::ALL {
        if pe.temporal[d.index()] > 1 {
            flat.push(FlatLoop { dim: d, extent: pe.temporal[d.index()], level: 0, kind: LoopKind::Temporal });
        }
    }
    for d in Dim::ALL {
        if pe.spatial[d.index()] > 1 {
            flat.push(FlatLoop { dim: d, extent: pe.spatial[d.index()], level: 0, kind: LoopKind::Spatial });
        }
    }
    let steps: Vec<u64> = (0..flat.len())
        .map(|i| flat[i + 1..].iter().filter(|f| f.dim == flat[i].dim).map(|f| f.extent).product())
        .collect();

    // statements per hoist position; slot 0 is the root, slot i + 1 the body of loop i
    let mut loads: Vec<Vec<MemOp>> = (0..=flat.len()).map(|_| Vec::new()).collect();
    let mut stores: Vec<Vec<MemOp>> = (0..=flat.len()).map(|_| Vec::new()).collect();
    for op in Operand::ALL {
        let chain = arch.chain(op);
        for pair in chain.windows(2) {
            let (lower, upper) = (pair[0], pair[1]);
            let slot = flat.iter().rposition(|f| f.level > lower && op.is_relevant(f.dim)).map_or(0, |i| i + 1);
            let c_window = flat[slot..].iter().filter(|f| f.dim == Dim::C).map(|f| f.extent).product();
            let load_intr = arch.memory_intrinsic(Direction::Load, op, upper, lower).map(|i| i.id.clone());
            loads[slot].push(MemOp { operand: op, upper, lower, intrinsic: load_intr, c_window });
            if op == Operand::Output {
                let store_intr = arch.memory_intrinsic(Direction::Store, op, lower, upper).map(|i| i.id.clone());
                stores[slot].push(MemOp { operand: op, upper, lower, intrinsic: store_intr, c_window });
            }
        }
    }
    for v in &mut loads {
        v.sort_by_key(|m| (core::cmp::Reverse(m.upper), m.operand.index()));
    }
    for v in &mut stores {
        v.sort_by_key(|m| m.lower);
    }

    fn build(slot: usize, flat: &[FlatLoop], steps: &[u64], loads: &mut [Vec<MemOp>], stores: &mut [Vec<MemOp>]) -> Vec<Node> {
        let mut body: Vec<Node> = core::mem::take(&mut loads[slot]).into_iter().map(Node::Load).collect();
        if slot < flat.len() {
            let f = &flat[slot];
            let inner = build(slot + 1, flat, steps, loads, stores);
            body.push(Node::Loop(Loop { dim: f.dim, extent: f.extent, step: steps[slot], level: f.level, kind: f.kind, body: inner }));
        } else {
            body.push(Node::Mac);
        }
        body.extend(core::mem::take(&mut stores[slot]).into_iter().map(Node::Store));
        body
    }
    let body = build(0, &flat, &steps, &mut loads, &mut stores);

    Ok(Program {
        config: arch.config_intrinsics().map(|i| i.id.clone()).collect(),
        dataflow: m.dataflow.clone(),
        mapping: m.clone(),
        workload: w.clone(),
        body,
        level_names: arch.levels.iter().map(|l| l.name.clone()).collect(),
        level_bytes: arch.levels.iter().map(|l| (!l.is_unbounded()).then_some(l.capacity_bytes)).collect(),
        regions: regions(m, arch),
    })
}

/// Replaces each PE-level loop subtree (or bare scalar body) with one call
/// of the first compute intrinsic whose bounds admit the PE tile.
pub fn tensorize(p: &Program, arch: &ArchSpec) -> Result<Program, LowerError> {
    let tile = p.mapping.tile(ArchSpec::PE_LEVEL);
    let intr = match arch.compute_intrinsic_for(tile) {
        Some(i) => i,
        None => {
            let first = arch.compute_intrinsics().next().ok_or(LowerError::NoComputeIntrinsic)?;
            let IntrinsicKind::Compute { max_tile, .. } = first.kind else { unreachable!() };
            let d = Dim::ALL.into_iter().find(|d| tile[d.index()] > max_tile[d.index()]).unwrap_or(Dim::N);
            return Err(LowerError::TileTooLarge { dim: d, tile, bound: max_tile[d.index()] });
        }
    };
    let IntrinsicKind::Compute { accumulate, .. } = intr.kind else { unreachable!() };
    if !accumulate && tile[Dim::C.index()] < p.workload.shape.c {
        return Err(LowerError::NoAccumulate(intr.id.clone()));
    }
    fn rewrite(nodes: &[Node], id: &str) -> Vec<Node> {
        nodes
            .iter()
            .map(|n| match n {
                Node::Loop(l) if l.level == ArchSpec::PE_LEVEL => Node::Compute { intrinsic: id.into() },
                Node::Mac => Node::Compute { intrinsic: id.into() },
                Node::Loop(l) => Node::Loop(Loop { body: rewrite(&l.body, id), ..l.clone() }),
                other => other.clone(),
            })
            .collect()
    }
    let mut out = p.clone();
    out.body = rewrite(&p.body, &intr.id);
    Ok(out)
}

pub(crate) fn shape_string(rows: u64, cols: u64) -> String {
    format!("{rows}x{cols}")
}
