//! Exhaustive enumeration of the feasible mapping set, for certifying the
//! branch-and-bound search on small problems.
//!
//! Every prime factor of every bound is placed in one slot: the PE array's
//! spatial slot or the temporal slot of some level. Spatial slots above the
//! PE array are left out because the dataflow predicate rejects them anyway.
//! Each distinct factor table is combined with every distinct canonical loop
//! order per level and filtered through the mapspace predicates.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use super::{proxy_objective, sort_ranked, Scored};
use crate::arch::{ArchSpec, DataflowSpec};
use crate::dim::Dim;
use crate::mapspace::{canonical_order, check_all, order_word, LevelMapping, Mapping, MemoryShares, PrimeFactorization};
use crate::workload::GemmShape;

/// Largest total number of prime factors the oracle accepts.
pub const ORACLE_MAX_FACTORS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("{0} prime factors exceed the oracle limit")]
    TooLarge(usize),
}

/// All feasible mappings, ranked by proxy cost then tie key.
pub fn enumerate_feasible(
    shape: GemmShape,
    arch: &ArchSpec,
    df: &DataflowSpec,
    shares: &MemoryShares,
    double_buffered: bool,
) -> Result<Vec<Scored>, OracleError> {
    let pf = PrimeFactorization::of(shape);
    if pf.total() > ORACLE_MAX_FACTORS {
        return Err(OracleError::TooLarge(pf.total()));
    }
    let nl = arch.num_levels();
    let slots = nl + 1; // 0: PE spatial, 1 + l: temporal at level l
    let primes: Vec<(usize, u64)> = Dim::ALL.iter().flat_map(|&d| pf.dim(d).iter().map(move |&p| (d.index(), p))).collect();

    let mut tables = BTreeSet::new();
    let mut digits = vec![0usize; primes.len()];
    loop {
        let mut spatial = [1u64; 3];
        let mut temporal = vec![[1u64; 3]; nl];
        for (&(d, p), &s) in primes.iter().zip(&digits) {
            if s == 0 {
                spatial[d] *= p;
            } else {
                temporal[s - 1][d] *= p;
            }
        }
        tables.insert((spatial, temporal));
        // next assignment in mixed radix
        let mut i = 0;
        while i < digits.len() {
            digits[i] += 1;
            if digits[i] < slots {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
        if i == digits.len() {
            break;
        }
    }

    let mut out = Vec::new();
    for (spatial, temporal) in tables {
        let per_level: Vec<Vec<[Dim; 3]>> = (0..nl)
            .map(|l| if l == ArchSpec::PE_LEVEL { vec![Dim::ALL] } else { distinct_orders(temporal[l]) })
            .collect();
        let mut pick = vec![0usize; nl];
        loop {
            let levels = (0..nl)
                .map(|l| LevelMapping {
                    spatial: if l == ArchSpec::PE_LEVEL { spatial } else { [1; 3] },
                    temporal: temporal[l],
                    order: per_level[l][pick[l]],
                })
                .collect();
            let m = Mapping { levels, dataflow: df.name.clone(), double_buffered, shares: shares.clone() };
            if check_all(&m, arch, shape, df).is_ok() {
                let proxy_cost = proxy_objective(&m, arch);
                out.push(Scored { mapping: m, proxy_cost });
            }
            let mut i = 0;
            while i < nl {
                pick[i] += 1;
                if pick[i] < per_level[i].len() {
                    break;
                }
                pick[i] = 0;
                i += 1;
            }
            if i == nl {
                break;
            }
        }
    }
    sort_ranked(&mut out);
    Ok(out)
}

fn distinct_orders(temporal: [u64; 3]) -> Vec<[Dim; 3]> {
    let mut v = Vec::new();
    for a in Dim::ALL {
        for b in Dim::ALL {
            for c in Dim::ALL {
                if a != b && b != c && a != c {
                    v.push(canonical_order([a, b, c], temporal));
                }
            }
        }
    }
    v.sort_by_key(|&o| order_word(o));
    v.dedup();
    v
}
