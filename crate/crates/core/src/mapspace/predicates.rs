//! Feasibility predicates. All arithmetic is exact integer arithmetic.

use super::mapping::Mapping;
use crate::arch::{ArchSpec, DataflowSpec, SpatialPolicy};
use crate::dim::{Dim, Operand};
use crate::workload::GemmShape;

/// The constraint family that rejects a mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstraintFamily {
    /// Per-dimension loop bound at the PE array exceeds DIM.
    PeBound,
    /// A tile does not fit its operand's (possibly halved) share.
    Capacity,
    /// Dataflow spatial policy or a per-level factor limit.
    Dataflow,
}

impl ConstraintFamily {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintFamily::PeBound => "pe_bound",
            ConstraintFamily::Capacity => "capacity",
            ConstraintFamily::Dataflow => "dataflow",
        }
    }
}

/// Spatial·temporal at the PE level is at most DIM in every dimension:
/// the product form of `Σ log(p)·X ≤ log(DIM)`.
pub fn check_pe_bound(m: &Mapping, arch: &ArchSpec) -> bool {
    let pe = &m.levels[ArchSpec::PE_LEVEL];
    Dim::ALL.iter().all(|&d| pe.factor(d) <= arch.pe_dim)
}

/// Bytes each operand's tile occupies at `level`; 0 for operands the level skips.
pub fn footprint(m: &Mapping, level: usize, shape: GemmShape, arch: &ArchSpec) -> [u64; 3] {
    let _ = shape;
    let tile = m.tile(level);
    let mut out = [0; 3];
    for op in Operand::ALL {
        if arch.holds(level, op) {
            out[op.index()] = op.tile_bytes(tile);
        }
    }
    out
}

/// `footprint ≤ share · capacity` (halved under double buffering), compared
/// as `footprint · den · (2 if db) ≤ num · capacity`.
pub fn fits_budget(footprint: u64, share: crate::Rational, capacity: u64, double_buffered: bool) -> bool {
    let (num, den) = (*share.numer(), *share.denom());
    if num < 0 || den <= 0 {
        return false;
    }
    let lhs = footprint as u128 * den as u128 * if double_buffered { 2 } else { 1 };
    lhs <= num as u128 * capacity as u128
}

pub fn check_capacity(m: &Mapping, arch: &ArchSpec, shape: GemmShape) -> bool {
    (0..arch.num_levels()).filter(|&l| arch.is_share_level(l)).all(|l| {
        let fp = footprint(m, l, shape, arch);
        arch.levels[l].operands_held.iter().all(|op| match m.shares.get(l, op) {
            Some(s) => fits_budget(fp[op.index()], s, arch.levels[l].capacity_bytes, m.double_buffered),
            None => false,
        })
    })
}

/// Dataflow spatial policy at the PE array, no spatial mapping above it,
/// and every per-level limit and fixed factor.
pub fn check_dataflow(m: &Mapping, df: &DataflowSpec, arch: &ArchSpec) -> bool {
    let pe = &m.levels[ArchSpec::PE_LEVEL];
    for d in Dim::ALL {
        let s = pe.spatial[d.index()];
        let bound = m.product(d);
        let ok = match df.policy(d) {
            SpatialPolicy::Forced => s > 1 || s == bound,
            SpatialPolicy::Forbidden => s == 1,
            SpatialPolicy::Free => true,
        };
        if !ok {
            return false;
        }
    }
    m.levels.iter().enumerate().all(|(i, lm)| {
        Dim::ALL.iter().all(|&d| {
            let (s, t) = (lm.spatial[d.index()], lm.temporal[d.index()]);
            let lim = arch.limits(i, d);
            (i == ArchSpec::PE_LEVEL || s == 1)
                && s <= lim.max_spatial
                && t <= lim.max_temporal
                && lim.fixed.is_none_or(|f| s * t == f)
        })
    })
}

/// All three predicates, reporting the first family that fails.
pub fn check_all(m: &Mapping, arch: &ArchSpec, shape: GemmShape, df: &DataflowSpec) -> Result<(), ConstraintFamily> {
    if !check_pe_bound(m, arch) {
        return Err(ConstraintFamily::PeBound);
    }
    if !check_dataflow(m, df, arch) {
        return Err(ConstraintFamily::Dataflow);
    }
    if !check_capacity(m, arch, shape) {
        return Err(ConstraintFamily::Capacity);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::tests::level;
    use crate::arch::{ConstraintSet, LevelConstraint};
    use crate::mapspace::{LevelMapping, MemoryShares};
    use crate::Rational;
    use alloc::vec;
    use alloc::vec::Vec;
    use Operand::*;

    fn arch(pe_dim: u64, spm: u64) -> ArchSpec {
        ArchSpec {
            name: "a".into(),
            pe_dim,
            levels: vec![
                level("pe", 64, &[Input, Weight, Output], true),
                level("spm", spm, &[Input, Weight, Output], false),
                level("dram", 0, &[Input, Weight, Output], false),
            ],
            dataflows: vec![ws()],
            constraints: ConstraintSet::default(),
            intrinsics: vec![],
            supports_double_buffering: true,
        }
    }

    fn ws() -> DataflowSpec {
        DataflowSpec {
            name: "ws".into(),
            spatial: [SpatialPolicy::Forbidden, SpatialPolicy::Forced, SpatialPolicy::Forced],
            stationary: Weight,
        }
    }

    fn mapping(levels: Vec<LevelMapping>, a: &ArchSpec) -> Mapping {
        Mapping { levels, dataflow: "ws".into(), double_buffered: false, shares: MemoryShares::even(a) }
    }

    fn lm(spatial: [u64; 3], temporal: [u64; 3]) -> LevelMapping {
        LevelMapping { spatial, temporal, order: Dim::ALL }
    }

    #[test]
    fn pe_bound_boundary() {
        let a = arch(16, 1 << 20);
        let ok = mapping(vec![lm([1, 4, 1], [1, 4, 1]), LevelMapping::UNIT, LevelMapping::UNIT], &a);
        assert!(check_pe_bound(&ok, &a));
        let bad = mapping(vec![lm([1, 4, 1], [1, 8, 1]), LevelMapping::UNIT, LevelMapping::UNIT], &a);
        assert!(!check_pe_bound(&bad, &a));
        for t in 1..=16 {
            let m = mapping(vec![lm([1, 1, 1], [t, t, t]), LevelMapping::UNIT, LevelMapping::UNIT], &a);
            assert!(check_pe_bound(&m, &a));
        }
    }

    #[test]
    fn footprint_arithmetic() {
        let a = arch(16, 1 << 20);
        let m = mapping(vec![lm([1, 16, 16], [16, 1, 1]), LevelMapping::UNIT, LevelMapping::UNIT], &a);
        assert_eq!(footprint(&m, 1, GemmShape::new(16, 16, 16), &a), [256, 256, 1024]);
        let unit = mapping(vec![LevelMapping::UNIT; 3], &a);
        assert_eq!(footprint(&unit, 1, GemmShape::new(1, 1, 1), &a), [1, 1, 4]);
        let mut skip = a.clone();
        skip.levels[1].operands_held = crate::dim::OperandSet::from_slice(&[Input, Output]);
        assert_eq!(footprint(&m, 1, GemmShape::new(16, 16, 16), &skip)[Weight.index()], 0);
    }

    #[test]
    fn budget_halving() {
        let half = Rational::new(1, 2);
        assert!(fits_budget(256, half, 1024, true));
        assert!(!fits_budget(257, half, 1024, true));
        assert!(fits_budget(512, half, 1024, false));
    }

    #[test]
    fn dataflow_policy() {
        let a = arch(16, 1 << 20);
        let good = mapping(vec![lm([1, 4, 4], [4, 1, 1]), LevelMapping::UNIT, lm([1; 3], [1, 2, 2])], &a);
        assert!(check_dataflow(&good, &ws(), &a));
        let n_spatial = mapping(vec![lm([2, 4, 4], [2, 1, 1]), LevelMapping::UNIT, lm([1; 3], [1, 2, 2])], &a);
        assert!(!check_dataflow(&n_spatial, &ws(), &a));
        let mut fixed = a.clone();
        fixed.constraints = ConstraintSet {
            entries: vec![LevelConstraint { level: 0, dim: Dim::K, max_spatial: None, max_temporal: None, fixed: Some(16) }],
        };
        let k8 = mapping(vec![lm([1, 4, 8], [4, 1, 1]), LevelMapping::UNIT, lm([1; 3], [1, 2, 2])], &a);
        assert!(!check_dataflow(&k8, &ws(), &fixed));
    }

    #[test]
    fn forced_dim_with_unit_bound_is_satisfied() {
        let a = arch(16, 1 << 20);
        let m = mapping(vec![lm([1, 1, 4], [4, 1, 1]), LevelMapping::UNIT, LevelMapping::UNIT], &a);
        assert!(check_dataflow(&m, &ws(), &a));
    }

    #[test]
    fn spatial_above_pe_is_rejected() {
        let a = arch(16, 1 << 20);
        let m = mapping(vec![lm([1, 2, 2], [1; 3]), lm([2, 1, 1], [1; 3]), LevelMapping::UNIT], &a);
        assert!(!check_dataflow(&m, &ws(), &a));
    }
}
