//! Exact scheduler for one tuning point.
//!
//! The feasible set is the one of the mixed-integer formulation: every prime
//! factor of every loop bound is assigned to one (level, spatial|temporal)
//! slot, subject to the PE bound, per-operand capacity and the dataflow.
//! Instead of an external MIP solver, [`solve`] runs a depth-first
//! branch-and-bound over cumulative tile sizes, outermost level first, with
//! the proxy objective (total bytes moved, see [`crate::traffic`]) computed
//! incrementally. [`enumerate_feasible`] is the brute-force oracle used to
//! certify it on small instances.

mod oracle;
mod search;

pub use oracle::{enumerate_feasible, OracleError, ORACLE_MAX_FACTORS};
pub use search::{solve, solve_with_stats, SearchStats};

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::arch::ArchSpec;
use crate::mapspace::{ConstraintFamily, Mapping};
use crate::traffic;

/// A feasible mapping with its proxy objective.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scored {
    pub mapping: Mapping,
    pub proxy_cost: u64,
}

impl Scored {
    /// Orders by cost, then by the mapping's tie key.
    pub fn cmp_rank(&self, other: &Self) -> Ordering {
        self.proxy_cost.cmp(&other.proxy_cost).then_with(|| self.mapping.tie_key().cmp(&other.mapping.tie_key()))
    }
}

/// Why a tuning point has no feasible mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Infeasible {
    /// Family that rejected the last candidate considered.
    pub family: ConstraintFamily,
    /// Rejections per family, indexed pe_bound, capacity, dataflow.
    pub rejections: [u64; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("infeasible: the last candidate was eliminated by the {} constraints", .0.family.name())]
    Infeasible(Infeasible),
    #[error("memory shares are missing or malformed for level `{0}`")]
    BadShares(alloc::string::String),
    #[error("k must be at least 1")]
    ZeroK,
}

/// Total bytes moved across all level boundaries.
pub fn proxy_objective(m: &Mapping, arch: &ArchSpec) -> u64 {
    traffic::analyze(m, arch).total_bytes()
}

pub(crate) fn sort_ranked(v: &mut Vec<Scored>) {
    let mut keyed: Vec<(u64, Vec<u64>, Scored)> = v.drain(..).map(|s| (s.proxy_cost, s.mapping.tie_key(), s)).collect();
    keyed.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    v.extend(keyed.into_iter().map(|(_, _, s)| s));
}
