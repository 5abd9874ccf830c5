//! The closed-form traffic counts agree with a brute-force walk of the loop
//! nest that tracks which tile each level holds.

use gemmap_core::arch::gemmini_like;
use gemmap_core::dim::Operand;
use gemmap_core::mapspace::Mapping;
use gemmap_core::solver::solve;
use gemmap_core::spacegen::tuning_points;
use gemmap_core::traffic::{analyze, loop_list};
use gemmap_core::{ArchSpec, Dim, GemmShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Walks every iteration of the temporal loops above the PE level and
/// counts, per chain boundary, how often the lower tile changes and how
/// many distinct tiles it holds. Output reloads skip first visits.
fn simulate(m: &Mapping, arch: &ArchSpec) -> Vec<(Operand, usize, u64, u64)> {
    let loops = loop_list(m);
    let total: u64 = loops.iter().map(|l| l.2).product();
    let mut out = Vec::new();
    for op in Operand::ALL {
        for pair in arch.chain(op).windows(2) {
            let lower = pair[0];
            let mut prev: Option<Vec<u64>> = None;
            let mut seen = std::collections::BTreeSet::new();
            let (mut loads, mut stores) = (0u64, 0u64);
            for it in 0..total {
                // decode mixed-radix iteration index, innermost loop fastest
                let mut rest = it;
                let mut idx = vec![0u64; loops.len()];
                for (i, l) in loops.iter().enumerate().rev() {
                    idx[i] = rest % l.2;
                    rest /= l.2;
                }
                let tile: Vec<u64> = loops
                    .iter()
                    .zip(&idx)
                    .filter(|((lv, d, _), _)| *lv > lower && op.is_relevant(*d))
                    .map(|(_, &i)| i)
                    .collect();
                if prev.as_ref() != Some(&tile) {
                    let first = seen.insert(tile.clone());
                    if op != Operand::Output || !first {
                        loads += 1;
                    }
                    if op == Operand::Output {
                        stores += 1;
                    }
                    prev = Some(tile);
                }
            }
            out.push((op, lower, loads, stores));
        }
    }
    out
}

#[test]
fn closed_form_matches_loop_walk() {
    let arch = gemmini_like();
    let points = tuning_points(&arch, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a11);
    let mut compared = 0;
    for _ in 0..40 {
        let shape = GemmShape::new(rng.gen_range(1..=96), rng.gen_range(1..=96), rng.gen_range(1..=96));
        let tp = &points[rng.gen_range(0..points.len())];
        let df = arch.dataflow(&tp.dataflow).unwrap();
        let Ok(found) = solve(shape, &arch, df, &tp.shares, tp.double_buffered, 6) else { continue };
        for s in found {
            // scramble orders too: the walk must agree for any loop order
            let mut m = s.mapping.clone();
            for l in m.levels.iter_mut().skip(1) {
                let r = rng.gen_range(0..6);
                l.order = [[Dim::N, Dim::C, Dim::K], [Dim::N, Dim::K, Dim::C], [Dim::C, Dim::N, Dim::K], [Dim::C, Dim::K, Dim::N], [Dim::K, Dim::N, Dim::C], [Dim::K, Dim::C, Dim::N]][r];
            }
            let report = analyze(&m, &arch);
            for (op, lower, loads, stores) in simulate(&m, &arch) {
                let t = report.get(op, lower).unwrap();
                assert_eq!((t.loads, t.stores), (loads, stores), "{op:?} into level {lower} for {m:?}");
            }
            compared += 1;
        }
    }
    assert!(compared >= 40);
}
