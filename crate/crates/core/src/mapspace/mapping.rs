use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::arch::ArchSpec;
use crate::dim::{Dim, Operand};
use crate::workload::GemmShape;
use crate::Rational;

/// Loop factors at one memory level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelMapping {
    pub spatial: [u64; 3],
    pub temporal: [u64; 3],
    /// Temporal loop order, outermost first.
    pub order: [Dim; 3],
}

impl LevelMapping {
    pub const UNIT: LevelMapping = LevelMapping { spatial: [1; 3], temporal: [1; 3], order: Dim::ALL };

    pub fn factor(&self, d: Dim) -> u64 {
        self.spatial[d.index()] * self.temporal[d.index()]
    }

    /// Temporal loops with extent > 1, in loop order.
    pub fn nonunit_loops(&self) -> impl Iterator<Item = (Dim, u64)> + '_ {
        self.order.iter().map(|&d| (d, self.temporal[d.index()])).filter(|&(_, t)| t > 1)
    }

    pub fn trips(&self) -> u64 {
        self.temporal.iter().product()
    }
}

/// Canonical form of a temporal order: loops with extent > 1 keep their
/// relative order, unit loops follow in N, C, K order. Orders that differ
/// only in where unit loops sit describe the same loop nest.
pub fn canonical_order(order: [Dim; 3], temporal: [u64; 3]) -> [Dim; 3] {
    let mut out = [Dim::N; 3];
    let mut n = 0;
    for d in order.iter().copied().filter(|d| temporal[d.index()] > 1) {
        out[n] = d;
        n += 1;
    }
    for d in Dim::ALL.iter().copied().filter(|d| temporal[d.index()] <= 1) {
        out[n] = d;
        n += 1;
    }
    out
}

/// Fraction of each share-managed level's capacity given to each operand.
/// `None` marks an operand the level does not hold (or a level without shares).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MemoryShares {
    pub levels: Vec<[Option<Rational>; 3]>,
}

impl MemoryShares {
    pub fn get(&self, level: usize, op: Operand) -> Option<Rational> {
        self.levels.get(level).and_then(|l| l[op.index()])
    }

    /// Equal split between the operands each share level holds.
    pub fn even(arch: &ArchSpec) -> Self {
        let levels = (0..arch.num_levels())
            .map(|l| {
                let mut row = [None; 3];
                if arch.is_share_level(l) {
                    let held = arch.levels[l].operands_held;
                    let n = held.len() as i64;
                    for op in held.iter() {
                        row[op.index()] = Some(Rational::new(1, n));
                    }
                }
                row
            })
            .collect();
        Self { levels }
    }

    /// Per-level sum of shares never exceeds one.
    pub fn is_well_formed(&self) -> bool {
        let zero = Rational::from_integer(0);
        self.levels.iter().all(|row| {
            row.iter().flatten().all(|s| *s >= zero) && row.iter().flatten().fold(zero, |a, s| a + s) <= Rational::from_integer(1)
        })
    }
}

/// A decoded schedule: per-level tile factors and temporal orders plus the
/// tuning point it was solved under.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mapping {
    /// Innermost (PE) first.
    pub levels: Vec<LevelMapping>,
    pub dataflow: String,
    pub double_buffered: bool,
    pub shares: MemoryShares,
}

impl Mapping {
    /// Everything temporal at the outermost level, in N, C, K order.
    pub fn outermost_only(shape: GemmShape, arch: &ArchSpec, dataflow: &str) -> Self {
        let mut levels = vec![LevelMapping::UNIT; arch.num_levels()];
        levels[arch.outermost()].temporal = shape.bounds();
        Self { levels, dataflow: dataflow.into(), double_buffered: false, shares: MemoryShares::even(arch) }
    }

    /// Cumulative tile extents held at `level` (product of factors at and below it).
    pub fn tile(&self, level: usize) -> [u64; 3] {
        let mut t = [1u64; 3];
        for lm in &self.levels[..=level] {
            for d in 0..3 {
                t[d] *= lm.spatial[d] * lm.temporal[d];
            }
        }
        t
    }

    pub fn product(&self, d: Dim) -> u64 {
        self.levels.iter().map(|l| l.factor(d)).product()
    }

    /// Factor conservation: per dimension the factors multiply to the bound.
    pub fn conserves(&self, shape: GemmShape) -> bool {
        Dim::ALL.iter().all(|&d| self.product(d) == shape.bounds()[d.index()])
    }

    /// Tiles cover the problem, possibly with clamped edge tiles.
    pub fn covers(&self, shape: GemmShape) -> bool {
        Dim::ALL.iter().all(|&d| self.product(d) >= shape.bounds()[d.index()])
    }

    pub fn canonicalize(&mut self) {
        for (i, l) in self.levels.iter_mut().enumerate() {
            l.order = if i == ArchSpec::PE_LEVEL { Dim::ALL } else { canonical_order(l.order, l.temporal) };
        }
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }

    /// Deterministic tie-break key: levels outermost first, per level the
    /// (temporal, spatial) factor of N, C, K, then the order as a word.
    pub fn tie_key(&self) -> Vec<u64> {
        let mut key = Vec::with_capacity(self.levels.len() * 7);
        for l in self.levels.iter().rev() {
            push_level_key(&mut key, l);
        }
        key
    }

    /// Loop structure only (factors and orders), without the tuning point.
    pub fn structure(&self) -> &[LevelMapping] {
        &self.levels
    }
}

pub(crate) fn order_word(order: [Dim; 3]) -> u64 {
    order.iter().fold(0, |w, d| w * 3 + d.index() as u64)
}

pub(crate) fn push_level_key(key: &mut Vec<u64>, l: &LevelMapping) {
    for d in 0..3 {
        key.push(l.temporal[d]);
        key.push(l.spatial[d]);
    }
    key.push(order_word(l.order));
}
