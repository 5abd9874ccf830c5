use alloc::vec;
use alloc::vec::Vec;

use super::factor::{factorize, PrimeFactorization};
use super::mapping::{LevelMapping, Mapping, MemoryShares};
use crate::arch::ArchSpec;
use crate::dim::Dim;
use crate::workload::GemmShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotKind {
    Spatial,
    Temporal,
}

/// Where one prime factor is mapped: a (memory level, spatial|temporal) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Slot {
    pub level: usize,
    pub kind: SlotKind,
}

/// The binary assignment `X[j][n][i][k]`, stored sparsely as the slot each
/// prime factor `n` of dimension `j` is mapped to. Temporal orders per level
/// are kept alongside rather than encoded as extra permutation levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingMatrix {
    pub factors: PrimeFactorization,
    pub assignment: [Vec<Option<Slot>>; 3],
    pub orders: Vec<[Dim; 3]>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("prime factor {index} of {dim} is not assigned")]
    Incomplete { dim: Dim, index: usize },
    #[error("prime factor {index} of {dim} is assigned to unknown level {level}")]
    UnknownLevel { dim: Dim, index: usize, level: usize },
}

impl MappingMatrix {
    /// An empty assignment over `shape`'s prime factors.
    pub fn unassigned(shape: GemmShape, num_levels: usize) -> Self {
        let factors = PrimeFactorization::of(shape);
        let assignment = [
            vec![None; factors.factors[0].len()],
            vec![None; factors.factors[1].len()],
            vec![None; factors.factors[2].len()],
        ];
        Self { factors, assignment, orders: vec![Dim::ALL; num_levels] }
    }

    /// `X[j][n][i][k]`.
    pub fn get(&self, j: Dim, n: usize, level: usize, kind: SlotKind) -> bool {
        self.assignment[j.index()].get(n).copied().flatten() == Some(Slot { level, kind })
    }

    pub fn is_complete(&self) -> bool {
        self.assignment.iter().all(|a| a.iter().all(Option::is_some))
    }

    /// Re-encodes a decoded mapping. Within each slot the primes of its
    /// factor are taken in ascending order, so `decode ∘ encode` is the
    /// identity and `encode ∘ decode` is the identity up to factor order
    /// inside a slot.
    pub fn encode(m: &Mapping, shape: GemmShape) -> Self {
        let mut x = Self::unassigned(shape, m.levels.len());
        for d in Dim::ALL {
            let primes = &x.factors.factors[d.index()];
            let mut used = vec![false; primes.len()];
            let slots = m.levels.iter().enumerate().flat_map(|(i, l)| {
                [
                    (Slot { level: i, kind: SlotKind::Spatial }, l.spatial[d.index()]),
                    (Slot { level: i, kind: SlotKind::Temporal }, l.temporal[d.index()]),
                ]
            });
            for (slot, f) in slots {
                for p in factorize(f) {
                    if let Some(n) = (0..primes.len()).find(|&n| !used[n] && primes[n] == p) {
                        used[n] = true;
                        x.assignment[d.index()][n] = Some(slot);
                    }
                }
            }
        }
        x.orders = m.levels.iter().map(|l| l.order).collect();
        x
    }
}

/// Multiplies the primes assigned to each slot into per-level factors.
/// The tuning fields of the result are neutral (no dataflow, no double
/// buffering, even shares); callers fill them in.
pub fn decode(x: &MappingMatrix, arch: &ArchSpec) -> Result<Mapping, DecodeError> {
    let mut levels = vec![LevelMapping::UNIT; arch.num_levels()];
    for d in Dim::ALL {
        for (n, slot) in x.assignment[d.index()].iter().enumerate() {
            let slot = slot.ok_or(DecodeError::Incomplete { dim: d, index: n })?;
            if slot.level >= levels.len() {
                return Err(DecodeError::UnknownLevel { dim: d, index: n, level: slot.level });
            }
            let p = x.factors.factors[d.index()][n];
            let lm = &mut levels[slot.level];
            match slot.kind {
                SlotKind::Spatial => lm.spatial[d.index()] *= p,
                SlotKind::Temporal => lm.temporal[d.index()] *= p,
            }
        }
    }
    for (l, o) in levels.iter_mut().zip(&x.orders) {
        l.order = *o;
    }
    Ok(Mapping { levels, dataflow: Default::default(), double_buffered: false, shares: MemoryShares::even(arch) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::tests::level;
    use crate::arch::{ConstraintSet, DataflowSpec, SpatialPolicy};
    use crate::dim::Operand::*;
    use alloc::string::ToString;

    fn arch3() -> ArchSpec {
        ArchSpec {
            name: "a".to_string(),
            pe_dim: 2,
            levels: vec![
                level("pe", 64, &[Input, Weight, Output], true),
                level("spm", 64, &[Input, Weight, Output], false),
                level("dram", 0, &[Input, Weight, Output], false),
            ],
            dataflows: vec![DataflowSpec { name: "any".into(), spatial: [SpatialPolicy::Free; 3], stationary: Weight }],
            constraints: ConstraintSet::default(),
            intrinsics: vec![],
            supports_double_buffering: false,
        }
    }

    #[test]
    fn all_outermost() {
        let shape = GemmShape::new(4, 4, 4);
        let mut x = MappingMatrix::unassigned(shape, 3);
        for a in &mut x.assignment {
            a.iter_mut().for_each(|s| *s = Some(Slot { level: 2, kind: SlotKind::Temporal }));
        }
        let m = decode(&x, &arch3()).unwrap();
        assert_eq!(m.tile(1), [1, 1, 1]);
        assert_eq!(m.levels[2].temporal, [4, 4, 4]);
    }

    #[test]
    fn split_n() {
        let shape = GemmShape::new(4, 1, 1);
        let mut x = MappingMatrix::unassigned(shape, 3);
        x.assignment[0][0] = Some(Slot { level: 0, kind: SlotKind::Spatial });
        x.assignment[0][1] = Some(Slot { level: 1, kind: SlotKind::Temporal });
        assert!(x.get(Dim::N, 0, 0, SlotKind::Spatial));
        let m = decode(&x, &arch3()).unwrap();
        assert_eq!(m.levels[0].spatial[0], 2);
        assert_eq!(m.levels[1].temporal[0], 2);
    }

    #[test]
    fn incomplete_is_an_error() {
        let x = MappingMatrix::unassigned(GemmShape::new(2, 1, 1), 3);
        assert_eq!(decode(&x, &arch3()), Err(DecodeError::Incomplete { dim: Dim::N, index: 0 }));
    }
}
