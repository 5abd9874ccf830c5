//! Depth-first branch-and-bound over cumulative tiles.
//!
//! A node at level `i` has fixed every factor and loop order above `i`,
//! plus the tile `T_{i-1}` that level `i` iterates over. Traffic across a
//! boundary only depends on loops above its lower level, so the cost of the
//! boundary just below `i` is exact once level `i`'s order is chosen. Deeper
//! boundaries are bounded from below using the loops known so far.
//!
//! Children are generated in ascending tie-key order, so a depth-first walk
//! visits leaves in tie-key order and pruning with `bound >= worst kept`
//! never drops a mapping that would displace one already kept.

use alloc::vec;
use alloc::vec::Vec;

use super::{sort_ranked, Infeasible, Scored, SolveError};
use crate::arch::{ArchSpec, DataflowSpec, Limits, SpatialPolicy};
use crate::dim::{Dim, Operand};
use crate::mapspace::{canonical_order, divisors, order_word, ConstraintFamily, LevelMapping, Mapping, MemoryShares};
use crate::workload::GemmShape;

/// Node budget for the greedy pass that seeds the incumbent.
const GREEDY_NODES: u64 = 4_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Interior nodes expanded by the exact pass.
    pub nodes: u64,
    /// Complete mappings reached by the exact pass.
    pub leaves: u64,
    /// Subtrees cut by the cost bound.
    pub bound_prunes: u64,
}

/// The `k` best feasible mappings of one tuning point, ranked by proxy cost
/// then tie key. Exact: the result equals the first `k` entries of
/// [`super::enumerate_feasible`].
pub fn solve(
    shape: GemmShape,
    arch: &ArchSpec,
    df: &DataflowSpec,
    shares: &MemoryShares,
    double_buffered: bool,
    k: usize,
) -> Result<Vec<Scored>, SolveError> {
    solve_with_stats(shape, arch, df, shares, double_buffered, k).0
}

pub fn solve_with_stats(
    shape: GemmShape,
    arch: &ArchSpec,
    df: &DataflowSpec,
    shares: &MemoryShares,
    double_buffered: bool,
    k: usize,
) -> (Result<Vec<Scored>, SolveError>, SearchStats) {
    if k == 0 {
        return (Err(SolveError::ZeroK), SearchStats::default());
    }
    let mut s = match Search::new(shape, arch, df, shares, double_buffered, k) {
        Ok(s) => s,
        Err(e) => return (Err(e), SearchStats::default()),
    };

    s.greedy = true;
    s.run();
    let incumbent = if s.kept.len() == k { s.kept.last().map(|e| e.0) } else { None };

    s.greedy = false;
    s.kept.clear();
    s.rejections = [0; 3];
    s.last_rejection = None;
    s.stats = SearchStats::default();
    s.upper = incumbent.unwrap_or(u64::MAX);
    s.run();

    let stats = s.stats;
    if s.kept.is_empty() {
        let family = s.last_rejection.unwrap_or(ConstraintFamily::Dataflow);
        return (Err(SolveError::Infeasible(Infeasible { family, rejections: s.rejections })), stats);
    }
    let mut out: Vec<Scored> = s
        .kept
        .into_iter()
        .map(|(cost, _, levels)| Scored {
            mapping: Mapping { levels, dataflow: df.name.clone(), double_buffered, shares: shares.clone() },
            proxy_cost: cost,
        })
        .collect();
    sort_ranked(&mut out);
    (Ok(out), stats)
}

/// Loops fixed so far, outermost first, summarized per operand.
#[derive(Clone, Copy)]
struct Flow {
    /// Product of all loop extents.
    all: u64,
    /// Product down to each operand's innermost indexing loop.
    refills: [u64; 3],
    /// Product of each operand's indexing loop extents.
    distinct: [u64; 3],
}

impl Flow {
    const ROOT: Flow = Flow { all: 1, refills: [1; 3], distinct: [1; 3] };

    fn push(mut self, d: Dim, extent: u64) -> Self {
        if extent > 1 {
            self.all = self.all.saturating_mul(extent);
            for op in Operand::ALL {
                if op.is_relevant(d) {
                    self.refills[op.index()] = self.all;
                    self.distinct[op.index()] = self.distinct[op.index()].saturating_mul(extent);
                }
            }
        }
        self
    }
}

/// Bytes moved across a boundary whose lower tile is `tile`, given `refills`
/// tile residencies.
fn boundary(op: Operand, tile: [u64; 3], refills: u64, distinct: u64) -> u64 {
    let events = match op {
        Operand::Output => refills.saturating_mul(2).saturating_sub(distinct),
        _ => refills,
    };
    op.tile_bytes(tile).saturating_mul(events)
}

struct Child {
    temporal: [u64; 3],
    order: [Dim; 3],
    tile: [u64; 3],
    flow: Flow,
    cost: u64,
    bound: u64,
}

type Kept = (u64, Vec<u64>, Vec<LevelMapping>);

struct Search<'a> {
    arch: &'a ArchSpec,
    df: &'a DataflowSpec,
    bounds: [u64; 3],
    k: usize,
    /// Byte budget per level and operand; `None` where capacity is not managed.
    budget: Vec<[Option<u64>; 3]>,
    limits: Vec<[Limits; 3]>,
    /// Largest admissible PE tile per dimension.
    pe_cap: [u64; 3],
    /// Number of levels `l` with `0 < l < j` holding each operand, by `j`.
    mid: Vec<[u64; 3]>,
    greedy: bool,
    greedy_nodes: u64,
    upper: u64,
    kept: Vec<Kept>,
    levels: Vec<LevelMapping>,
    rejections: [u64; 3],
    last_rejection: Option<ConstraintFamily>,
    stats: SearchStats,
}

impl<'a> Search<'a> {
    fn new(
        shape: GemmShape,
        arch: &'a ArchSpec,
        df: &'a DataflowSpec,
        shares: &MemoryShares,
        db: bool,
        k: usize,
    ) -> Result<Self, SolveError> {
        let n = arch.num_levels();
        let mut budget = vec![[None; 3]; n];
        for (l, row) in budget.iter_mut().enumerate().filter(|(l, _)| arch.is_share_level(*l)) {
            for op in arch.levels[l].operands_held.iter() {
                let s = shares.get(l, op).ok_or_else(|| SolveError::BadShares(arch.levels[l].name.clone()))?;
                let (num, den) = (*s.numer(), *s.denom());
                if num < 0 || den <= 0 {
                    return Err(SolveError::BadShares(arch.levels[l].name.clone()));
                }
                let cap = num as u128 * arch.levels[l].capacity_bytes as u128;
                let div = den as u128 * if db { 2 } else { 1 };
                row[op.index()] = Some(u64::try_from(cap / div).unwrap_or(u64::MAX));
            }
        }
        let limits: Vec<[Limits; 3]> = (0..n).map(|l| Dim::ALL.map(|d| arch.limits(l, d))).collect();
        let pe_cap = Dim::ALL.map(|d| {
            let lim = limits[ArchSpec::PE_LEVEL][d.index()];
            arch.pe_dim.min(lim.max_spatial.saturating_mul(lim.max_temporal))
        });
        let mid = (0..n)
            .map(|j| Operand::ALL.map(|op| (1..j).filter(|&l| arch.holds(l, op)).count() as u64))
            .collect();
        Ok(Self {
            arch,
            df,
            bounds: shape.bounds(),
            k,
            budget,
            limits,
            pe_cap,
            mid,
            greedy: false,
            greedy_nodes: 0,
            upper: u64::MAX,
            kept: Vec::new(),
            levels: vec![LevelMapping::UNIT; n],
            rejections: [0; 3],
            last_rejection: None,
            stats: SearchStats::default(),
        })
    }

    fn run(&mut self) {
        self.greedy_nodes = 0;
        self.levels = vec![LevelMapping::UNIT; self.arch.num_levels()];
        self.visit(self.arch.outermost(), self.bounds, Flow::ROOT, 0);
    }

    fn reject(&mut self, family: ConstraintFamily) {
        if !self.greedy {
            self.rejections[family as usize] += 1;
            self.last_rejection = Some(family);
        }
    }

    fn worst(&self) -> Option<u64> {
        (self.kept.len() == self.k).then(|| self.kept.last().map(|e| e.0)).flatten()
    }

    fn cut(&self, bound: u64) -> bool {
        match self.worst() {
            Some(w) => bound >= w,
            None => bound > self.upper,
        }
    }

    fn out_of_budget(&self) -> bool {
        self.greedy && (self.greedy_nodes >= GREEDY_NODES || self.kept.len() == self.k)
    }

    /// Expands level `level` (≥ 1) whose cumulative tile is `tile`.
    fn visit(&mut self, level: usize, tile: [u64; 3], flow: Flow, cost: u64) {
        if self.out_of_budget() {
            return;
        }
        if self.greedy {
            self.greedy_nodes += 1;
        } else {
            self.stats.nodes += 1;
        }
        let mut children = self.children(level, tile, flow, cost);
        if self.greedy {
            children.sort_by_key(|c| c.bound);
        }
        for c in children {
            if self.out_of_budget() {
                return;
            }
            if self.cut(c.bound) {
                if !self.greedy {
                    self.stats.bound_prunes += 1;
                }
                continue;
            }
            self.levels[level] = LevelMapping { spatial: [1; 3], temporal: c.temporal, order: c.order };
            if level == 1 {
                self.leaves(c.tile, c.cost);
            } else {
                self.visit(level - 1, c.tile, c.flow, c.cost);
            }
        }
        self.levels[level] = LevelMapping::UNIT;
    }

    /// Every feasible (temporal factors, order) choice at `level`, in tie-key order.
    fn children(&mut self, level: usize, tile: [u64; 3], flow: Flow, cost: u64) -> Vec<Child> {
        let lower = level - 1;
        let options = Dim::ALL.map(|d| {
            let lim = self.limits[level][d.index()];
            divisors(tile[d.index()])
                .into_iter()
                .filter(|&t| t <= lim.max_temporal && lim.fixed.is_none_or(|f| f == t))
                .collect::<Vec<_>>()
        });
        let mut out = Vec::new();
        for d in Dim::ALL {
            if options[d.index()].is_empty() {
                self.reject(ConstraintFamily::Dataflow);
            }
        }
        for &tn in &options[0] {
            for &tc in &options[1] {
                for &tk in &options[2] {
                    let temporal = [tn, tc, tk];
                    let inner = [tile[0] / tn, tile[1] / tc, tile[2] / tk];
                    if let Err(f) = self.admissible(lower, inner) {
                        self.reject(f);
                        continue;
                    }
                    for order in orders(temporal) {
                        let flow = order.iter().fold(flow, |fl, &d| fl.push(d, temporal[d.index()]));
                        let mut c = cost;
                        for op in Operand::ALL.into_iter().filter(|&op| self.arch.holds(lower, op)) {
                            let i = op.index();
                            c = c.saturating_add(boundary(op, inner, flow.refills[i], flow.distinct[i]));
                        }
                        let bound = if lower == ArchSpec::PE_LEVEL { c } else { c.saturating_add(self.below(lower, inner, flow)) };
                        out.push(Child { temporal, order, tile: inner, flow, cost: c, bound });
                    }
                }
            }
        }
        out
    }

    /// Constraints decidable from the tile at `lower` alone.
    fn admissible(&self, lower: usize, tile: [u64; 3]) -> Result<(), ConstraintFamily> {
        let pe = ArchSpec::PE_LEVEL;
        for d in Dim::ALL {
            let t = tile[d.index()];
            let lim = self.limits[pe][d.index()];
            if lower == pe {
                if t > self.arch.pe_dim {
                    return Err(ConstraintFamily::PeBound);
                }
                if t > self.pe_cap[d.index()] || lim.fixed.is_some_and(|f| f != t) {
                    return Err(ConstraintFamily::Dataflow);
                }
            } else if lim.fixed.is_some_and(|f| !t.is_multiple_of(f)) {
                return Err(ConstraintFamily::Dataflow);
            }
        }
        for op in Operand::ALL {
            if let Some(b) = self.budget[lower][op.index()] {
                if op.tile_bytes(tile) > b {
                    return Err(ConstraintFamily::Capacity);
                }
            }
        }
        Ok(())
    }

    /// Lower bound on traffic across all boundaries below `lower`, whose tile is `tile`.
    fn below(&self, lower: usize, tile: [u64; 3], flow: Flow) -> u64 {
        let f = |op: Operand, refills: u64| boundary(op, tile, refills, flow.distinct[op.index()]);
        let simple = Operand::ALL.map(|op| f(op, flow.refills[op.index()]));
        let mut total = 0u64;
        for op in Operand::ALL {
            total = total.saturating_add(self.mid[lower][op.index()].saturating_mul(simple[op.index()]));
        }
        // PE boundary: the innermost remaining loop indexes two operands,
        // which then refill once per step of every loop left.
        let pe = ArchSpec::PE_LEVEL;
        let min_pe_tile = Dim::ALL.map(|d| self.limits[pe][d.index()].fixed.unwrap_or(1));
        let e_min = Dim::ALL.map(|d| {
            let t = tile[d.index()];
            match self.limits[pe][d.index()].fixed {
                Some(f) => t / f,
                None => t / largest_divisor_at_most(t, self.pe_cap[d.index()]),
            }
        });
        let mut best = u64::MAX;
        if e_min.iter().all(|&e| e == 1) {
            best = simple.iter().fold(0u64, |a, &b| a.saturating_add(b));
        }
        for d in Dim::ALL {
            if tile[d.index()] / min_pe_tile[d.index()] < 2 {
                continue;
            }
            let v = Operand::ALL.iter().fold(0u64, |acc, &op| {
                let ir = op.irrelevant();
                let term = if ir == d { simple[op.index()] } else { f(op, flow.all.saturating_mul(e_min[ir.index()])) };
                acc.saturating_add(term)
            });
            best = best.min(v);
        }
        total.saturating_add(best)
    }

    /// Level 0: split each PE tile into spatial × temporal.
    fn leaves(&mut self, tile: [u64; 3], cost: u64) {
        let pe = ArchSpec::PE_LEVEL;
        let options = Dim::ALL.map(|d| {
            let i = d.index();
            let lim = self.limits[pe][i];
            let bound = self.bounds[i];
            let policy = self.df.policy(d);
            divisors(tile[i])
                .into_iter()
                .map(|t| (t, tile[i] / t))
                .filter(|&(t, s)| {
                    s <= lim.max_spatial
                        && t <= lim.max_temporal
                        && match policy {
                            SpatialPolicy::Forced => s > 1 || s == bound,
                            SpatialPolicy::Forbidden => s == 1,
                            SpatialPolicy::Free => true,
                        }
                })
                .collect::<Vec<_>>()
        });
        if options.iter().any(Vec::is_empty) {
            self.reject(ConstraintFamily::Dataflow);
            return;
        }
        for &(tn, sn) in &options[0] {
            for &(tc, sc) in &options[1] {
                for &(tk, sk) in &options[2] {
                    if self.worst().is_some_and(|w| cost >= w) || self.out_of_budget() {
                        return;
                    }
                    self.levels[pe] = LevelMapping { spatial: [sn, sc, sk], temporal: [tn, tc, tk], order: Dim::ALL };
                    if !self.greedy {
                        self.stats.leaves += 1;
                    }
                    self.keep(cost);
                }
            }
        }
        self.levels[pe] = LevelMapping::UNIT;
    }

    fn keep(&mut self, cost: u64) {
        let mut key = Vec::with_capacity(self.levels.len() * 7);
        for l in self.levels.iter().rev() {
            crate::mapspace::push_level_key(&mut key, l);
        }
        let pos = self.kept.partition_point(|e| (e.0, &e.1) <= (cost, &key));
        if pos < self.k {
            self.kept.insert(pos, (cost, key, self.levels.clone()));
            self.kept.truncate(self.k);
        }
    }
}

/// Distinct canonical orders for a level with these temporal factors,
/// ascending by order word.
fn orders(temporal: [u64; 3]) -> Vec<[Dim; 3]> {
    use Dim::*;
    const PERMS: [[Dim; 3]; 6] = [[N, C, K], [N, K, C], [C, N, K], [C, K, N], [K, N, C], [K, C, N]];
    let mut v: Vec<[Dim; 3]> = PERMS.iter().map(|&p| canonical_order(p, temporal)).collect();
    v.sort_by_key(|&o| order_word(o));
    v.dedup();
    v
}

fn largest_divisor_at_most(n: u64, cap: u64) -> u64 {
    divisors(n).into_iter().rev().find(|&d| d <= cap).unwrap_or(1)
}
