//! Mapping documents: the scheduler's output and `run`'s input.
//!
//! ```yaml
//! layer: gemm                 # optional: the operator this mapping is for
//! shape: {N: 64, C: 64, K: 64} # optional: the bounds it was solved for
//! dataflow: ws
//! double_buffered: true
//! shares:
//!   scratchpad: {input: 1/2, weight: 1/2}
//!   accumulator: {output: 1}
//! levels:                      # innermost first, one per architecture level
//!   - {level: registers, temporal: {N: 1, C: 1, K: 1}, spatial: {N: 1, C: 16, K: 16}, order: [N, C, K]}
//!   ...
//! proxy_cost: 12345            # optional
//! ```

use std::collections::BTreeMap;

use gemmap_core::mapspace::{LevelMapping, MemoryShares};
use gemmap_core::{ArchSpec, Diagnostic, Dim, GemmShape, Mapping, Operand};
use serde::{Deserialize, Serialize};

use super::{from_yaml, to_yaml, DimName, Dims, OperandName, Ratio};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Dims>,
    pub dataflow: String,
    pub double_buffered: bool,
    pub shares: BTreeMap<String, BTreeMap<OperandName, Ratio>>,
    pub levels: Vec<LevelDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxy_cost: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelDoc {
    pub level: String,
    pub temporal: Dims,
    pub spatial: Dims,
    /// Temporal loop order, outermost first.
    pub order: Vec<DimName>,
}

/// A mapping file holds one mapping or a ranked list of them.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MappingFile {
    One(MappingDoc),
    Many(Vec<MappingDoc>),
}

impl MappingFile {
    pub fn into_vec(self) -> Vec<MappingDoc> {
        match self {
            MappingFile::One(d) => vec![d],
            MappingFile::Many(v) => v,
        }
    }
}

pub fn shares_to_doc(s: &MemoryShares, arch: &ArchSpec) -> BTreeMap<String, BTreeMap<OperandName, Ratio>> {
    let mut out = BTreeMap::new();
    for (l, row) in s.levels.iter().enumerate() {
        let entries: BTreeMap<OperandName, Ratio> =
            Operand::ALL.iter().filter_map(|&op| row[op.index()].map(|r| (op.into(), Ratio(r)))).collect();
        if !entries.is_empty() {
            out.insert(arch.levels[l].name.clone(), entries);
        }
    }
    out
}

pub fn shares_from_doc(doc: &BTreeMap<String, BTreeMap<OperandName, Ratio>>, arch: &ArchSpec, path: &str) -> Result<MemoryShares, Vec<Diagnostic>> {
    let mut errs = Vec::new();
    let mut levels = vec![[None; 3]; arch.num_levels()];
    for (name, row) in doc {
        let p = format!("{path}.{name}");
        let Some(l) = arch.level_index(name) else {
            errs.push(Diagnostic::error(p, format!("unknown level `{name}`")));
            continue;
        };
        if !arch.is_share_level(l) {
            errs.push(Diagnostic::error(p, "only on-chip buffer levels between the PE array and off-chip memory take shares"));
            continue;
        }
        for (&op, r) in row {
            let op: Operand = op.into();
            if !arch.levels[l].operands_held.contains(op) {
                errs.push(Diagnostic::error(format!("{p}.{}", op.name()), format!("`{name}` does not hold {}", op.name())));
            }
            levels[l][op.index()] = Some(r.0);
        }
    }
    for l in (0..arch.num_levels()).filter(|&l| arch.is_share_level(l)) {
        for op in arch.levels[l].operands_held.iter() {
            if levels[l][op.index()].is_none() {
                errs.push(Diagnostic::error(format!("{path}.{}.{}", arch.levels[l].name, op.name()), "missing share"));
            }
        }
    }
    let shares = MemoryShares { levels };
    if errs.is_empty() && !shares.is_well_formed() {
        errs.push(Diagnostic::error(path, "shares must be non-negative and sum to at most 1 per level"));
    }
    if errs.is_empty() {
        Ok(shares)
    } else {
        Err(errs)
    }
}

pub fn mapping_to_doc(m: &Mapping, arch: &ArchSpec) -> MappingDoc {
    MappingDoc {
        layer: None,
        shape: None,
        dataflow: m.dataflow.clone(),
        double_buffered: m.double_buffered,
        shares: shares_to_doc(&m.shares, arch),
        levels: m
            .levels
            .iter()
            .enumerate()
            .map(|(i, l)| LevelDoc {
                level: arch.levels[i].name.clone(),
                temporal: l.temporal.into(),
                spatial: l.spatial.into(),
                order: l.order.iter().map(|&d| d.into()).collect(),
            })
            .collect(),
        proxy_cost: None,
    }
}

/// Structural conversion: names resolved, one record per level, orders
/// are permutations. Feasibility is checked separately.
pub fn mapping_from_doc(doc: &MappingDoc, arch: &ArchSpec) -> Result<Mapping, Vec<Diagnostic>> {
    let mut errs = Vec::new();
    if arch.dataflow(&doc.dataflow).is_none() {
        errs.push(Diagnostic::error("dataflow", format!("unknown dataflow `{}`", doc.dataflow)));
    }
    if doc.levels.len() != arch.num_levels() {
        errs.push(Diagnostic::error("levels", format!("{} records for an architecture with {} levels", doc.levels.len(), arch.num_levels())));
    }
    let mut levels = Vec::new();
    for (i, l) in doc.levels.iter().enumerate() {
        let p = format!("levels[{i}]");
        if arch.levels.get(i).map(|a| &a.name) != Some(&l.level) {
            errs.push(Diagnostic::error(format!("{p}.level"), format!("expected `{}`", arch.levels.get(i).map_or("<none>", |a| a.name.as_str()))));
        }
        let order: Vec<Dim> = l.order.iter().map(|&d| d.into()).collect();
        let mut sorted = order.clone();
        sorted.sort();
        if sorted != Dim::ALL {
            errs.push(Diagnostic::error(format!("{p}.order"), "must list N, C and K once each"));
        }
        let (t, s): ([u64; 3], [u64; 3]) = (l.temporal.into(), l.spatial.into());
        if t.iter().chain(&s).any(|&f| f == 0) {
            errs.push(Diagnostic::error(p.clone(), "loop factors must be positive"));
        }
        levels.push(LevelMapping { spatial: s, temporal: t, order: order.try_into().unwrap_or(Dim::ALL) });
    }
    let shares = shares_from_doc(&doc.shares, arch, "shares").unwrap_or_else(|e| {
        errs.extend(e);
        MemoryShares::default()
    });
    if !errs.is_empty() {
        return Err(errs);
    }
    Ok(Mapping { levels, dataflow: doc.dataflow.clone(), double_buffered: doc.double_buffered, shares })
}

pub fn parse_mappings(text: &str, arch: &ArchSpec) -> Result<Vec<(MappingDoc, Mapping)>, Vec<Diagnostic>> {
    let file: MappingFile = from_yaml(text).map_err(|d| vec![d])?;
    let docs = file.into_vec();
    if docs.is_empty() {
        return Err(vec![Diagnostic::error("<document>", "no mapping")]);
    }
    docs.into_iter().map(|d| mapping_from_doc(&d, arch).map(|m| (d, m))).collect()
}

pub fn render_mapping(m: &Mapping, arch: &ArchSpec, layer: Option<&str>, shape: Option<GemmShape>, proxy: Option<u64>) -> MappingDoc {
    let mut d = mapping_to_doc(m, arch);
    d.layer = layer.map(str::to_string);
    d.shape = shape.map(|s| s.bounds().into());
    d.proxy_cost = proxy;
    d
}

pub fn to_text(docs: &[MappingDoc]) -> String {
    match docs {
        [one] => to_yaml(one),
        many => to_yaml(&many),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gemmap_core::arch::gemmini_like;

    #[test]
    fn round_trip() {
        let a = gemmini_like();
        let m = Mapping::outermost_only(GemmShape::new(4, 8, 2), &a, "os");
        let text = to_text(&[render_mapping(&m, &a, Some("l0"), Some(GemmShape::new(4, 8, 2)), Some(7))]);
        let back = parse_mappings(&text, &a).unwrap();
        assert_eq!(back[0].1, m);
        assert_eq!(back[0].0.layer.as_deref(), Some("l0"));
    }

    #[test]
    fn bad_order_and_share() {
        let a = gemmini_like();
        let mut d = mapping_to_doc(&Mapping::outermost_only(GemmShape::new(1, 1, 1), &a, "ws"), &a);
        d.levels[1].order = vec![DimName::N, DimName::N, DimName::K];
        d.shares.get_mut("scratchpad").unwrap().insert(OperandName::Output, Ratio(gemmap_core::Rational::new(1, 4)));
        let errs = mapping_from_doc(&d, &a).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "levels[1].order"));
        assert!(errs.iter().any(|e| e.path == "shares.scratchpad.output"));
    }
}
