//! Cost-parameter overrides, applied on top of an architecture description.
//!
//! ```yaml
//! intrinsics:
//!   matmul: {fixed_cycles: 4, per_element_cycles: 1}
//! levels:
//!   dram: {bandwidth_bytes_per_cycle: 8, dma_startup_cycles: 200}
//! ```
//!
//! Every field is optional; unnamed intrinsics and levels keep their values.

use std::collections::BTreeMap;

use gemmap_core::{ArchSpec, Diagnostic};
use serde::{Deserialize, Serialize};

use super::{from_yaml, Ratio};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostOverrides {
    #[serde(default)]
    pub intrinsics: BTreeMap<String, IntrinsicCost>,
    #[serde(default)]
    pub levels: BTreeMap<String, LevelCost>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicCost {
    pub fixed_cycles: Option<u64>,
    pub per_element_cycles: Option<Ratio>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelCost {
    pub bandwidth_bytes_per_cycle: Option<Ratio>,
    pub dma_startup_cycles: Option<u64>,
}

pub fn apply_overrides(arch: &mut ArchSpec, o: &CostOverrides) -> Result<(), Vec<Diagnostic>> {
    let mut errs = Vec::new();
    for (id, c) in &o.intrinsics {
        match arch.intrinsics.iter_mut().find(|i| &i.id == id) {
            Some(i) => {
                if let Some(f) = c.fixed_cycles {
                    i.cost.fixed_cycles = f;
                }
                if let Some(p) = c.per_element_cycles {
                    i.cost.per_element_cycles = p.0;
                }
            }
            None => errs.push(Diagnostic::error(format!("intrinsics.{id}"), "unknown intrinsic")),
        }
    }
    for (name, c) in &o.levels {
        match arch.levels.iter_mut().find(|l| &l.name == name) {
            Some(l) => {
                if let Some(b) = c.bandwidth_bytes_per_cycle {
                    l.bandwidth_bytes_per_cycle = b.0;
                }
                if let Some(s) = c.dma_startup_cycles {
                    l.dma_startup_cycles = s;
                }
            }
            None => errs.push(Diagnostic::error(format!("levels.{name}"), "unknown level")),
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

pub fn parse_overrides(text: &str) -> Result<CostOverrides, Vec<Diagnostic>> {
    from_yaml(text).map_err(|d| vec![d])
}

#[cfg(test)]
mod tests {
    use super::*;
    use gemmap_core::arch::gemmini_like;
    use gemmap_core::Rational;

    #[test]
    fn overrides_apply_and_unknown_names_fail() {
        let mut a = gemmini_like();
        let o = parse_overrides("intrinsics: {matmul: {fixed_cycles: 3}}\nlevels: {dram: {bandwidth_bytes_per_cycle: 1/2}}").unwrap();
        apply_overrides(&mut a, &o).unwrap();
        assert_eq!(a.intrinsic("matmul").unwrap().cost.fixed_cycles, 3);
        assert_eq!(a.levels[3].bandwidth_bytes_per_cycle, Rational::new(1, 2));
        let bad = parse_overrides("intrinsics: {nope: {fixed_cycles: 1}}").unwrap();
        assert_eq!(apply_overrides(&mut a, &bad).unwrap_err()[0].path, "intrinsics.nope");
    }
}
