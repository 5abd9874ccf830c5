//! Architecture description documents.
//!
//! ```yaml
//! name: gemmini-like
//! pe_dim: 16
//! levels:            # innermost first; the last one is off-chip (capacity 0)
//!   - {name: registers, capacity_bytes: 1536, bandwidth_bytes_per_cycle: 64,
//!      dma_startup_cycles: 0, operands: [input, weight, output], pe_level: true}
//!   ...
//! dataflows:
//!   - {name: ws, stationary: weight, spatial: {N: forbidden, C: forced, K: forced}}
//! constraints:       # optional
//!   - {level: scratchpad, dim: K, max_temporal: 4}
//! intrinsics:
//!   - {id: matmul, kind: compute, max_tile: {N: 16, C: 16, K: 16}, accumulate: true,
//!      cost_params: {fixed_cycles: 8, per_element_cycles: 1}}
//!   - {id: mvin_input, kind: memory, direction: load, operand: input, src: dram, dst: scratchpad,
//!      cost_params: {fixed_cycles: 2, per_element_cycles: 0}}
//!   - {id: config_ex, kind: config, cost_params: {fixed_cycles: 10, per_element_cycles: 0}}
//! double_buffering: true
//! ```

use gemmap_core::arch::{
    validate_arch, ConstraintSet, CostParams, DataflowSpec, Direction, IntrinsicKind, IntrinsicSpec, LevelConstraint, SpatialPolicy,
};
use gemmap_core::dim::OperandSet;
use gemmap_core::{ArchSpec, Diagnostic, Dim, MemoryLevel, Operand};
use serde::{Deserialize, Serialize};

use super::{from_yaml, to_yaml, DimName, Dims, OperandName, Ratio};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDoc {
    pub name: String,
    pub pe_dim: u64,
    pub levels: Vec<LevelDoc>,
    pub dataflows: Vec<DataflowDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintDoc>,
    pub intrinsics: Vec<IntrinsicDoc>,
    pub double_buffering: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelDoc {
    pub name: String,
    pub capacity_bytes: u64,
    pub bandwidth_bytes_per_cycle: Ratio,
    pub dma_startup_cycles: u64,
    pub operands: Vec<OperandName>,
    pub pe_level: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Forced,
    Forbidden,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialDoc {
    #[serde(rename = "N")]
    pub n: PolicyName,
    #[serde(rename = "C")]
    pub c: PolicyName,
    #[serde(rename = "K")]
    pub k: PolicyName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataflowDoc {
    pub name: String,
    pub stationary: OperandName,
    pub spatial: SpatialDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDoc {
    pub level: String,
    pub dim: DimName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_spatial: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_temporal: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntrinsicKindName {
    Compute,
    Memory,
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionName {
    Load,
    Store,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostDoc {
    pub fixed_cycles: u64,
    pub per_element_cycles: Ratio,
}

/// Fields that do not belong to the intrinsic's kind must be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicDoc {
    pub id: String,
    pub kind: IntrinsicKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tile: Option<Dims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accumulate: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<DirectionName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operand: Option<OperandName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst: Option<String>,
    pub cost_params: CostDoc,
}

fn policy(p: PolicyName) -> SpatialPolicy {
    match p {
        PolicyName::Forced => SpatialPolicy::Forced,
        PolicyName::Forbidden => SpatialPolicy::Forbidden,
        PolicyName::Free => SpatialPolicy::Free,
    }
}

fn policy_name(p: SpatialPolicy) -> PolicyName {
    match p {
        SpatialPolicy::Forced => PolicyName::Forced,
        SpatialPolicy::Forbidden => PolicyName::Forbidden,
        SpatialPolicy::Free => PolicyName::Free,
    }
}

/// Resolves names to indices. Errors are collected, not short-circuited.
pub fn arch_from_doc(doc: &ArchDoc) -> Result<ArchSpec, Vec<Diagnostic>> {
    let mut errs = Vec::new();
    let level_of = |name: &str, path: String, errs: &mut Vec<Diagnostic>| -> Option<usize> {
        let i = doc.levels.iter().position(|l| l.name == name);
        if i.is_none() {
            errs.push(Diagnostic::error(path, format!("unknown level `{name}`")));
        }
        i
    };
    let levels = doc
        .levels
        .iter()
        .map(|l| MemoryLevel {
            name: l.name.clone(),
            capacity_bytes: l.capacity_bytes,
            bandwidth_bytes_per_cycle: l.bandwidth_bytes_per_cycle.0,
            dma_startup_cycles: l.dma_startup_cycles,
            operands_held: OperandSet::from_slice(&l.operands.iter().map(|&o| o.into()).collect::<Vec<Operand>>()),
            is_pe_level: l.pe_level,
        })
        .collect();
    let dataflows = doc
        .dataflows
        .iter()
        .map(|d| DataflowSpec {
            name: d.name.clone(),
            spatial: [policy(d.spatial.n), policy(d.spatial.c), policy(d.spatial.k)],
            stationary: d.stationary.into(),
        })
        .collect();
    let mut constraints = ConstraintSet::default();
    for (i, c) in doc.constraints.iter().enumerate() {
        if let Some(level) = level_of(&c.level, format!("constraints[{i}].level"), &mut errs) {
            constraints.entries.push(LevelConstraint {
                level,
                dim: c.dim.into(),
                max_spatial: c.max_spatial,
                max_temporal: c.max_temporal,
                fixed: c.fixed,
            });
        }
    }
    let mut intrinsics = Vec::new();
    for (i, d) in doc.intrinsics.iter().enumerate() {
        let path = |f: &str| format!("intrinsics[{i}].{f}");
        let stray = |present: bool, field: &str, errs: &mut Vec<Diagnostic>| {
            if present {
                errs.push(Diagnostic::error(path(field), format!("not allowed for a {} intrinsic", kind_str(d.kind))));
            }
        };
        let kind = match d.kind {
            IntrinsicKindName::Compute => {
                stray(d.direction.is_some(), "direction", &mut errs);
                stray(d.operand.is_some(), "operand", &mut errs);
                stray(d.src.is_some(), "src", &mut errs);
                stray(d.dst.is_some(), "dst", &mut errs);
                match (d.max_tile, d.accumulate) {
                    (Some(t), Some(accumulate)) => Some(IntrinsicKind::Compute { max_tile: t.into(), accumulate }),
                    (t, a) => {
                        for (missing, f) in [(t.is_none(), "max_tile"), (a.is_none(), "accumulate")] {
                            if missing {
                                errs.push(Diagnostic::error(path(f), "required for a compute intrinsic"));
                            }
                        }
                        None
                    }
                }
            }
            IntrinsicKindName::Memory => {
                stray(d.max_tile.is_some(), "max_tile", &mut errs);
                stray(d.accumulate.is_some(), "accumulate", &mut errs);
                let mut req = |present: bool, f: &str| {
                    if !present {
                        errs.push(Diagnostic::error(path(f), "required for a memory intrinsic"));
                    }
                };
                req(d.direction.is_some(), "direction");
                req(d.operand.is_some(), "operand");
                req(d.src.is_some(), "src");
                req(d.dst.is_some(), "dst");
                let src = d.src.as_deref().and_then(|s| level_of(s, path("src"), &mut errs));
                let dst = d.dst.as_deref().and_then(|s| level_of(s, path("dst"), &mut errs));
                match (d.direction, d.operand, src, dst) {
                    (Some(dir), Some(op), Some(src), Some(dst)) => Some(IntrinsicKind::Memory {
                        direction: match dir {
                            DirectionName::Load => Direction::Load,
                            DirectionName::Store => Direction::Store,
                        },
                        operand: op.into(),
                        src,
                        dst,
                    }),
                    _ => None,
                }
            }
            IntrinsicKindName::Config => {
                for (present, f) in [
                    (d.max_tile.is_some(), "max_tile"),
                    (d.accumulate.is_some(), "accumulate"),
                    (d.direction.is_some(), "direction"),
                    (d.operand.is_some(), "operand"),
                    (d.src.is_some(), "src"),
                    (d.dst.is_some(), "dst"),
                ] {
                    stray(present, f, &mut errs);
                }
                Some(IntrinsicKind::Config)
            }
        };
        if let Some(kind) = kind {
            let cost = CostParams { fixed_cycles: d.cost_params.fixed_cycles, per_element_cycles: d.cost_params.per_element_cycles.0 };
            intrinsics.push(IntrinsicSpec { id: d.id.clone(), kind, cost });
        }
    }
    if !errs.is_empty() {
        return Err(errs);
    }
    Ok(ArchSpec {
        name: doc.name.clone(),
        pe_dim: doc.pe_dim,
        levels,
        dataflows,
        constraints,
        intrinsics,
        supports_double_buffering: doc.double_buffering,
    })
}

fn kind_str(k: IntrinsicKindName) -> &'static str {
    match k {
        IntrinsicKindName::Compute => "compute",
        IntrinsicKindName::Memory => "memory",
        IntrinsicKindName::Config => "config",
    }
}

pub fn arch_to_doc(a: &ArchSpec) -> ArchDoc {
    let name = |i: usize| a.levels[i].name.clone();
    ArchDoc {
        name: a.name.clone(),
        pe_dim: a.pe_dim,
        levels: a
            .levels
            .iter()
            .map(|l| LevelDoc {
                name: l.name.clone(),
                capacity_bytes: l.capacity_bytes,
                bandwidth_bytes_per_cycle: Ratio(l.bandwidth_bytes_per_cycle),
                dma_startup_cycles: l.dma_startup_cycles,
                operands: l.operands_held.iter().map(Into::into).collect(),
                pe_level: l.is_pe_level,
            })
            .collect(),
        dataflows: a
            .dataflows
            .iter()
            .map(|d| DataflowDoc {
                name: d.name.clone(),
                stationary: d.stationary.into(),
                spatial: SpatialDoc {
                    n: policy_name(d.policy(Dim::N)),
                    c: policy_name(d.policy(Dim::C)),
                    k: policy_name(d.policy(Dim::K)),
                },
            })
            .collect(),
        constraints: a
            .constraints
            .entries
            .iter()
            .map(|c| ConstraintDoc {
                level: name(c.level),
                dim: c.dim.into(),
                max_spatial: c.max_spatial,
                max_temporal: c.max_temporal,
                fixed: c.fixed,
            })
            .collect(),
        intrinsics: a
            .intrinsics
            .iter()
            .map(|i| {
                let mut d = IntrinsicDoc {
                    id: i.id.clone(),
                    kind: IntrinsicKindName::Config,
                    max_tile: None,
                    accumulate: None,
                    direction: None,
                    operand: None,
                    src: None,
                    dst: None,
                    cost_params: CostDoc { fixed_cycles: i.cost.fixed_cycles, per_element_cycles: Ratio(i.cost.per_element_cycles) },
                };
                match &i.kind {
                    IntrinsicKind::Compute { max_tile, accumulate } => {
                        d.kind = IntrinsicKindName::Compute;
                        d.max_tile = Some((*max_tile).into());
                        d.accumulate = Some(*accumulate);
                    }
                    IntrinsicKind::Memory { direction, operand, src, dst } => {
                        d.kind = IntrinsicKindName::Memory;
                        d.direction = Some(match direction {
                            Direction::Load => DirectionName::Load,
                            Direction::Store => DirectionName::Store,
                        });
                        d.operand = Some((*operand).into());
                        d.src = Some(name(*src));
                        d.dst = Some(name(*dst));
                    }
                    IntrinsicKind::Config => {}
                }
                d
            })
            .collect(),
        double_buffering: a.supports_double_buffering,
    }
}

/// Parses and validates an architecture description. On failure every
/// error (and warning) diagnostic is returned; on success, the warnings.
pub fn parse_arch(text: &str) -> Result<(ArchSpec, Vec<Diagnostic>), Vec<Diagnostic>> {
    let doc: ArchDoc = from_yaml(text).map_err(|d| vec![d])?;
    let spec = arch_from_doc(&doc)?;
    let diags = validate_arch(&spec);
    if gemmap_core::diag::has_errors(&diags) {
        Err(diags)
    } else {
        Ok((spec, diags))
    }
}

pub fn render_arch(a: &ArchSpec) -> String {
    to_yaml(&arch_to_doc(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use gemmap_core::arch::gemmini_like;

    #[test]
    fn round_trip_preset() {
        let a = gemmini_like();
        let text = render_arch(&a);
        let (b, warnings) = parse_arch(&text).unwrap();
        assert_eq!(a, b);
        assert!(warnings.is_empty());
    }

    #[test]
    fn minimal_scalar_accelerator() {
        let text = "
name: scalar
pe_dim: 1
levels:
  - {name: pe, capacity_bytes: 6, bandwidth_bytes_per_cycle: 1, dma_startup_cycles: 0, operands: [input, weight, output], pe_level: true}
  - {name: dram, capacity_bytes: 0, bandwidth_bytes_per_cycle: 1, dma_startup_cycles: 0, operands: [input, weight, output], pe_level: false}
dataflows:
  - {name: scalar, stationary: output, spatial: {N: free, C: free, K: free}}
intrinsics:
  - {id: mac, kind: compute, max_tile: {N: 1, C: 1, K: 1}, accumulate: true, cost_params: {fixed_cycles: 0, per_element_cycles: 1}}
double_buffering: false
";
        let (a, _) = parse_arch(text).unwrap();
        assert_eq!(a.num_levels(), 2);
    }

    #[test]
    fn compute_bound_above_pe_dim() {
        let mut doc = arch_to_doc(&gemmini_like());
        let c = doc.intrinsics.iter_mut().find(|i| i.kind == IntrinsicKindName::Compute).unwrap();
        c.max_tile.as_mut().unwrap().k = 32;
        let err = parse_arch(&to_yaml(&doc)).unwrap_err();
        assert!(err.iter().any(|d| d.path.ends_with("max_tile.K")), "{err:?}");
    }

    #[test]
    fn unknown_key_and_missing_field() {
        let text = render_arch(&gemmini_like()).replace("double_buffering: true", "double_buffering: true\nfrequency: 1");
        let err = parse_arch(&text).unwrap_err();
        assert!(err[0].message.contains("frequency"), "{err:?}");
        let text = render_arch(&gemmini_like()).replace("pe_dim: 16\n", "");
        let err = parse_arch(&text).unwrap_err();
        assert!(err[0].message.contains("pe_dim"), "{err:?}");
    }

    #[test]
    fn unknown_level_reference() {
        let text = render_arch(&gemmini_like()).replacen("src: dram", "src: hbm", 1);
        let err = parse_arch(&text).unwrap_err();
        assert!(err.iter().any(|d| d.path.ends_with(".src") && d.message.contains("hbm")), "{err:?}");
    }

    #[test]
    fn stray_field_for_kind() {
        let mut doc = arch_to_doc(&gemmini_like());
        doc.intrinsics[0].accumulate = Some(true);
        let err = parse_arch(&to_yaml(&doc)).unwrap_err();
        assert_eq!(err[0].path, "intrinsics[0].accumulate");
    }
}
