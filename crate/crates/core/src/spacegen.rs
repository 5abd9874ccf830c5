//! Schedule-space generation: every combination of dataflow, per-level
//! memory shares and double buffering is a tuning point; each point is
//! solved independently and the results are merged into one candidate list.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::arch::{ArchSpec, MemoryLevel};
use crate::costmodel::CostReport;
use crate::dim::Operand;
use crate::mapspace::{LevelMapping, Mapping, MemoryShares};
use crate::solver::{self, Infeasible, SolveError};
use crate::workload::GemmShape;
use crate::Rational;

pub const DEFAULT_GRANULARITY: u64 = 4;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TuningPoint {
    pub dataflow: alloc::string::String,
    pub shares: MemoryShares,
    pub double_buffered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleCandidate {
    pub tuning: TuningPoint,
    pub mapping: Mapping,
    pub proxy_cost: u64,
    pub latency: Option<CostReport>,
}

/// Result of solving one tuning point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PointOutcome {
    /// Number of mappings the solver returned.
    Solved(usize),
    Infeasible(Infeasible),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    /// Every tuning point in iteration order with its outcome.
    pub points: Vec<(TuningPoint, PointOutcome)>,
    /// Bounds the mappings were solved for (see [`padded_shape`]).
    pub solved_shape: GemmShape,
    /// Deduplicated candidates ordered by proxy cost, then tie key.
    pub candidates: Vec<ScheduleCandidate>,
}

impl Space {
    pub fn feasible_points(&self) -> usize {
        self.points.iter().filter(|(_, o)| matches!(o, PointOutcome::Solved(_))).count()
    }
}

/// Share rows for one level: every assignment of fractions `a/g > 0` to the
/// operands the level holds with sum at most one, in lexicographic order of
/// numerators. Levels without managed capacity get a single empty row.
pub fn share_grid(level: &MemoryLevel, granularity: u64) -> Vec<[Option<Rational>; 3]> {
    assert!(granularity >= 1, "granularity must be positive");
    if level.is_pe_level || level.is_unbounded() {
        return vec![[None; 3]];
    }
    let held: Vec<Operand> = level.operands_held.iter().collect();
    let mut rows = Vec::new();
    let mut nums = vec![1u64; held.len()];
    if held.is_empty() {
        return vec![[None; 3]];
    }
    loop {
        if nums.iter().sum::<u64>() <= granularity {
            let mut row = [None; 3];
            for (op, &a) in held.iter().zip(&nums) {
                row[op.index()] = Some(Rational::new(a as i64, granularity as i64));
            }
            rows.push(row);
        }
        // odometer, last operand fastest
        let mut i = held.len();
        loop {
            if i == 0 {
                return rows;
            }
            i -= 1;
            nums[i] += 1;
            if nums[i] <= granularity {
                break;
            }
            nums[i] = 1;
        }
    }
}

/// Every tuning point: dataflows (outermost) × share rows per level × db settings.
pub fn tuning_points(arch: &ArchSpec, granularity: u64) -> Vec<TuningPoint> {
    let grids: Vec<_> = arch.levels.iter().map(|l| share_grid(l, granularity)).collect();
    let dbs: &[bool] = if arch.supports_double_buffering { &[false, true] } else { &[false] };
    let mut out = Vec::new();
    if grids.iter().any(Vec::is_empty) {
        return out;
    }
    for df in &arch.dataflows {
        let mut pick = vec![0usize; grids.len()];
        loop {
            let shares = MemoryShares { levels: pick.iter().zip(&grids).map(|(&i, g)| g[i]).collect() };
            for &db in dbs {
                out.push(TuningPoint { dataflow: df.name.clone(), shares: shares.clone(), double_buffered: db });
            }
            let mut i = grids.len();
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                pick[i] += 1;
                if pick[i] < grids[i].len() {
                    break;
                }
                pick[i] = 0;
            }
            if pick.iter().all(|&p| p == 0) {
                break;
            }
        }
    }
    out
}

/// `|dataflows| · Π_levels |share rows| · |db settings|`.
pub fn tuning_point_count(arch: &ArchSpec, granularity: u64) -> usize {
    let rows: usize = arch.levels.iter().map(|l| share_grid(l, granularity).len()).product();
    arch.dataflows.len() * rows * if arch.supports_double_buffering { 2 } else { 1 }
}

/// The bounds the solver works with. A dimension that some dataflow must
/// spread over the array needs a factor in `2..=pe_dim`; when its bound has
/// none (a prime larger than the array, say) it is rounded up to the nearest
/// bound that does. The padded iterations are clamped away by lowering.
pub fn padded_shape(shape: GemmShape, arch: &ArchSpec) -> GemmShape {
    let mut b = shape.bounds();
    for d in crate::Dim::ALL {
        let forced = arch.dataflows.iter().any(|df| df.policy(d) == crate::arch::SpatialPolicy::Forced);
        if forced && arch.pe_dim >= 2 {
            let usable = |x: u64| x == 1 || (2..=arch.pe_dim.min(x)).any(|f| x.is_multiple_of(f));
            while !usable(b[d.index()]) {
                b[d.index()] += 1;
            }
        }
    }
    GemmShape::new(b[0], b[1], b[2])
}

/// Solves every tuning point for its `k` best mappings and merges them.
/// Mappings are solved at [`padded_shape`] and cover `shape`.
///
/// Mappings with the same loop structure, dataflow and buffering found under
/// different share rows are kept once (from the first such point): the cost
/// model does not depend on shares, so the copies would only repeat.
pub fn generate_space(shape: GemmShape, arch: &ArchSpec, granularity: u64, k: usize) -> Space {
    let shape = padded_shape(shape, arch);
    let mut points = Vec::new();
    let mut candidates = Vec::new();
    let mut seen: BTreeSet<(Vec<LevelMapping>, alloc::string::String, bool)> = BTreeSet::new();
    for tp in tuning_points(arch, granularity) {
        let df = arch.dataflow(&tp.dataflow).expect("tuning point names an arch dataflow");
        match solver::solve(shape, arch, df, &tp.shares, tp.double_buffered, k) {
            Ok(found) => {
                points.push((tp.clone(), PointOutcome::Solved(found.len())));
                for s in found {
                    let key = (s.mapping.levels.clone(), tp.dataflow.clone(), tp.double_buffered);
                    if seen.insert(key) {
                        candidates.push(ScheduleCandidate { tuning: tp.clone(), mapping: s.mapping, proxy_cost: s.proxy_cost, latency: None });
                    }
                }
            }
            Err(SolveError::Infeasible(why)) => points.push((tp, PointOutcome::Infeasible(why))),
            Err(e) => panic!("tuning point generated with invalid shares: {e}"),
        }
    }
    let mut keyed: Vec<_> = candidates.into_iter().map(|c| ((c.proxy_cost, c.mapping.tie_key(), c.tuning.clone()), c)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Space { points, solved_shape: shape, candidates: keyed.into_iter().map(|(_, c)| c).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::tests::{base, level};
    use crate::dim::Operand::*;

    fn r(a: i64, b: i64) -> Option<Rational> {
        Some(Rational::new(a, b))
    }

    #[test]
    fn grid_three_operands() {
        let l = level("spm", 1024, &[Input, Weight, Output], false);
        assert!(share_grid(&l, 2).is_empty());
        let g4 = share_grid(&l, 4);
        assert_eq!(g4.len(), 4);
        assert!(g4.contains(&[r(1, 2), r(1, 4), r(1, 4)]));
        assert!(g4.contains(&[r(1, 4), r(1, 4), r(1, 4)]));
        assert_eq!(share_grid(&l, 3), vec![[r(1, 3), r(1, 3), r(1, 3)]]);
    }

    #[test]
    fn grid_bypass_and_identity() {
        let two = level("spm", 1024, &[Input, Output], false);
        assert_eq!(share_grid(&two, 2), vec![[r(1, 2), None, r(1, 2)]]);
        let one = level("acc", 1024, &[Output], false);
        assert_eq!(share_grid(&one, 1), vec![[None, None, r(1, 1)]]);
        assert_eq!(share_grid(&level("dram", 0, &[Input], false), 4), vec![[None; 3]]);
    }

    #[test]
    fn padding_only_where_forced_dims_need_it() {
        let a = crate::arch::gemmini_like();
        assert_eq!(padded_shape(GemmShape::new(19, 19, 19), &a), GemmShape::new(20, 20, 20));
        assert_eq!(padded_shape(GemmShape::new(17 * 17, 1, 16), &a), GemmShape::new(17 * 17 + 1, 1, 16));
        assert_eq!(padded_shape(GemmShape::new(64, 48, 12), &a), GemmShape::new(64, 48, 12));
        let mut free = a.clone();
        for df in &mut free.dataflows {
            df.spatial = [crate::arch::SpatialPolicy::Free; 3];
        }
        assert_eq!(padded_shape(GemmShape::new(19, 23, 29), &free), GemmShape::new(19, 23, 29));
    }

    #[test]
    fn grids_are_nested() {
        let l = level("spm", 1024, &[Input, Weight], false);
        let (g2, g4) = (share_grid(&l, 2), share_grid(&l, 4));
        assert!(g2.iter().all(|row| g4.contains(row)));
    }

    #[test]
    fn point_count_formula() {
        let mut a = base();
        let second = crate::arch::DataflowSpec { name: "os".into(), ..a.dataflows[0].clone() };
        a.dataflows.push(second);
        for g in [1, 2, 4] {
            assert_eq!(tuning_points(&a, g).len(), tuning_point_count(&a, g));
        }
        // spm holds two operands: 6 rows at g=4; acc holds one: 4 rows
        assert_eq!(tuning_point_count(&a, 4), 2 * 6 * 4 * 2);
        a.supports_double_buffering = false;
        assert_eq!(tuning_points(&a, 4).len(), 2 * 6 * 4);
    }

    #[test]
    fn space_is_deduplicated_and_sorted() {
        let a = base();
        let s = generate_space(GemmShape::new(32, 32, 32), &a, 2, 2);
        assert_eq!(s.points.len(), tuning_point_count(&a, 2));
        let keys: Vec<_> = s.candidates.iter().map(|c| (c.mapping.levels.clone(), c.tuning.double_buffered)).collect();
        let uniq: BTreeSet<_> = keys.iter().cloned().collect();
        assert_eq!(uniq.len(), keys.len());
        assert!(s.candidates.windows(2).all(|w| w[0].proxy_cost <= w[1].proxy_cost));
    }
}
