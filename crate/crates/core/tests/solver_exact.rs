//! Branch-and-bound search against brute-force enumeration on random small
//! instances: same optimum, same top-k order, same feasibility verdicts.

use gemmap_core::arch::{ConstraintSet, DataflowSpec, LevelConstraint, SpatialPolicy};
use gemmap_core::dim::OperandSet;
use gemmap_core::mapspace::{check_all, factorize, MemoryShares};
use gemmap_core::solver::{enumerate_feasible, solve, SolveError};
use gemmap_core::{ArchSpec, Dim, GemmShape, MemoryLevel, Operand, Rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIMS: [u64; 9] = [1, 2, 3, 4, 6, 8, 9, 12, 16];

fn level(name: &str, cap: u64, ops: &[Operand], pe: bool) -> MemoryLevel {
    MemoryLevel {
        name: name.into(),
        capacity_bytes: cap,
        bandwidth_bytes_per_cycle: Rational::from_integer(8),
        dma_startup_cycles: 4,
        operands_held: OperandSet::from_slice(ops),
        is_pe_level: pe,
    }
}

fn random_policy(rng: &mut ChaCha8Rng) -> [SpatialPolicy; 3] {
    let mut p = [SpatialPolicy::Free; 3];
    for x in &mut p {
        *x = match rng.gen_range(0..3) {
            0 => SpatialPolicy::Forced,
            1 => SpatialPolicy::Forbidden,
            _ => SpatialPolicy::Free,
        };
    }
    p
}

fn random_arch(rng: &mut ChaCha8Rng) -> ArchSpec {
    use Operand::*;
    let pe_dim = [2, 3, 4, 8][rng.gen_range(0..4)];
    let mut levels = vec![level("pe", 0, &[Input, Weight, Output], true)];
    levels[0].capacity_bytes = 4096;
    match rng.gen_range(0..3) {
        0 => {}
        1 => levels.push(level("spm", rng.gen_range(16..512), &[Input, Weight, Output], false)),
        _ => {
            levels.push(level("spm", rng.gen_range(8..256), &[Input, Weight], false));
            levels.push(level("acc", rng.gen_range(16..256), &[Output], false));
        }
    }
    levels.push(level("dram", 0, &[Input, Weight, Output], false));
    let mut constraints = ConstraintSet::default();
    if rng.gen_bool(0.2) {
        constraints.entries.push(LevelConstraint {
            level: rng.gen_range(0..levels.len()),
            dim: Dim::ALL[rng.gen_range(0..3)],
            max_spatial: None,
            max_temporal: Some(rng.gen_range(1..5)),
            fixed: None,
        });
    }
    ArchSpec {
        name: "rand".into(),
        pe_dim,
        levels,
        dataflows: vec![DataflowSpec { name: "df".into(), spatial: random_policy(rng), stationary: Weight }],
        constraints,
        intrinsics: vec![],
        supports_double_buffering: true,
    }
}

fn random_shares(arch: &ArchSpec, rng: &mut ChaCha8Rng) -> MemoryShares {
    let mut s = MemoryShares::even(arch);
    for row in &mut s.levels {
        let held: Vec<usize> = (0..3).filter(|&i| row[i].is_some()).collect();
        if held.len() > 1 && rng.gen_bool(0.5) {
            let big = held[rng.gen_range(0..held.len())];
            for &i in &held {
                row[i] = Some(Rational::new(if i == big { 2 } else { 1 }, 4));
            }
        }
    }
    s
}

fn factor_count(n: u64) -> usize {
    factorize(n).len()
}

#[test]
fn solver_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut instances, mut infeasible) = (0, 0);
    while instances < 240 {
        let shape = GemmShape::new(DIMS[rng.gen_range(0..9)], DIMS[rng.gen_range(0..9)], DIMS[rng.gen_range(0..9)]);
        if factor_count(shape.n) + factor_count(shape.c) + factor_count(shape.k) > 8 {
            continue;
        }
        instances += 1;
        let arch = random_arch(&mut rng);
        let df = arch.dataflows[0].clone();
        let shares = random_shares(&arch, &mut rng);
        let db = rng.gen_bool(0.5);
        let all = enumerate_feasible(shape, &arch, &df, &shares, db).unwrap();
        let k = rng.gen_range(1..4);
        match solve(shape, &arch, &df, &shares, db, k) {
            Ok(got) => {
                assert!(!all.is_empty(), "solver found a mapping the oracle rejects: {shape} {arch:?}");
                let want: Vec<_> = all.iter().take(k).collect();
                assert_eq!(got.len(), want.len());
                for (g, w) in got.iter().zip(&want) {
                    assert_eq!(g.proxy_cost, w.proxy_cost, "{shape} {arch:?} {shares:?} db={db}");
                    assert_eq!(g.mapping, w.mapping, "{shape}");
                    assert_eq!(check_all(&g.mapping, &arch, shape, &df), Ok(()));
                }
            }
            Err(SolveError::Infeasible(_)) => {
                assert!(all.is_empty(), "oracle found {} mappings for {shape} {arch:?}", all.len());
                infeasible += 1;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert!(infeasible > 0 && infeasible < instances, "infeasible {infeasible} of {instances}");
}
