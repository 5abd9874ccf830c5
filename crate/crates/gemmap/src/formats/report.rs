//! The `explore` report: per accelerated layer, the schedule-space summary
//! and every ranked candidate with its cost breakdown.
//!
//! The report contains no timestamps or timings, so identical inputs give
//! byte-identical reports.

use std::collections::BTreeMap;

use gemmap_core::costmodel::{compute_lower_bound, CostReport};
use gemmap_core::spacegen::{PointOutcome, ScheduleCandidate, Space};
use gemmap_core::{ArchSpec, GemmShape};
use serde::Serialize;

use super::mapping::{render_mapping, shares_to_doc, MappingDoc};
use super::{Dims, OperandName, Ratio};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploreReport {
    pub arch: String,
    pub granularity: u64,
    pub k: usize,
    /// Preprocessing operators left to run on the host (not costed).
    pub host_preprocessing_ops: usize,
    pub layers: Vec<LayerReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub id: String,
    pub shape: Dims,
    pub solved_shape: Dims,
    pub tuning_points: usize,
    pub feasible_points: usize,
    /// Infeasible tuning points by the constraint family that ruled them out.
    pub infeasible_by_family: BTreeMap<String, usize>,
    pub compute_lower_bound_cycles: Ratio,
    pub candidates: Vec<CandidateDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningDoc {
    pub dataflow: String,
    pub double_buffered: bool,
    pub shares: BTreeMap<String, BTreeMap<OperandName, Ratio>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCostDoc {
    pub level: String,
    pub trips: u64,
    pub transfer_cycles: Ratio,
    pub inner_cycles: Ratio,
    pub latency: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficDoc {
    pub operand: OperandName,
    pub upper: String,
    pub lower: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostDoc {
    pub total_cycles: Ratio,
    pub compute_cycles: Ratio,
    pub pe_utilization: Ratio,
    pub traffic_bytes: u64,
    pub levels: Vec<LevelCostDoc>,
    pub traffic: Vec<TrafficDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateDoc {
    pub rank: usize,
    pub tuning: TuningDoc,
    pub proxy_cost: u64,
    pub cost: Option<CostDoc>,
    pub mapping: MappingDoc,
}

pub fn cost_doc(r: &CostReport, arch: &ArchSpec) -> CostDoc {
    let name = |i: usize| arch.levels[i].name.clone();
    CostDoc {
        total_cycles: Ratio(r.total_cycles),
        compute_cycles: Ratio(r.compute_cycles),
        pe_utilization: Ratio(r.pe_utilization),
        traffic_bytes: r.traffic_bytes(),
        levels: r
            .levels
            .iter()
            .map(|l| LevelCostDoc {
                level: name(l.level),
                trips: l.trips,
                transfer_cycles: Ratio(l.transfer_cycles),
                inner_cycles: Ratio(l.inner_cycles),
                latency: Ratio(l.latency),
            })
            .collect(),
        traffic: r.traffic.iter().map(|t| TrafficDoc { operand: t.operand.into(), upper: name(t.upper), lower: name(t.lower), bytes: t.bytes }).collect(),
    }
}

pub fn candidate_doc(rank: usize, c: &ScheduleCandidate, arch: &ArchSpec, layer: &str, shape: GemmShape) -> CandidateDoc {
    CandidateDoc {
        rank,
        tuning: TuningDoc {
            dataflow: c.tuning.dataflow.clone(),
            double_buffered: c.tuning.double_buffered,
            shares: shares_to_doc(&c.tuning.shares, arch),
        },
        proxy_cost: c.proxy_cost,
        cost: c.latency.as_ref().map(|r| cost_doc(r, arch)),
        mapping: render_mapping(&c.mapping, arch, Some(layer), Some(shape), Some(c.proxy_cost)),
    }
}

/// Summarizes one layer's ranked space.
pub fn layer_report(id: &str, shape: GemmShape, space: &Space, ranked: &[ScheduleCandidate], arch: &ArchSpec) -> LayerReport {
    let mut infeasible = BTreeMap::new();
    for (_, o) in &space.points {
        if let PointOutcome::Infeasible(why) = o {
            *infeasible.entry(why.family.name().to_string()).or_insert(0) += 1;
        }
    }
    LayerReport {
        id: id.into(),
        shape: shape.bounds().into(),
        solved_shape: space.solved_shape.bounds().into(),
        tuning_points: space.points.len(),
        feasible_points: space.feasible_points(),
        infeasible_by_family: infeasible,
        compute_lower_bound_cycles: Ratio(compute_lower_bound(shape, arch)),
        candidates: ranked.iter().enumerate().map(|(i, c)| candidate_doc(i + 1, c, arch, id, space.solved_shape)).collect(),
    }
}
