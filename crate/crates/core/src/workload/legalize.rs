use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::graph::{Graph, GraphOp, OpKind};
use super::Epilogue;
use crate::diag::Diagnostic;

/// Unified operators an accelerator can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FusedKind {
    Dense,
    Conv2d,
}

impl FusedKind {
    pub const ALL: [FusedKind; 2] = [FusedKind::Dense, FusedKind::Conv2d];
}

struct Fusion {
    head: usize,
    bias: usize,
    requant: usize,
    clip: usize,
    kind: OpKind,
}

/// Rewrites every `qnn_dense|qnn_conv2d → bias_add → requantize → clip`
/// chain into one generalized operator carrying the whole epilogue.
///
/// A chain is fused only if every intermediate result has exactly one
/// consumer and is not a graph output; anything else is left untouched and
/// reported.
pub fn legalize_fuse(graph: &Graph, supported: &[FusedKind]) -> (Graph, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let index: BTreeMap<&str, usize> = graph.ops.iter().enumerate().map(|(i, o)| (o.id.as_str(), i)).collect();
    let mut fusions = Vec::new();

    for (hi, head) in graph.ops.iter().enumerate() {
        let fused = match head.kind {
            OpKind::QnnDense => FusedKind::Dense,
            OpKind::QnnConv2d(_) => FusedKind::Conv2d,
            _ => continue,
        };
        let path = format!("ops[{}]", head.id);
        let Some(links) = follow_chain(graph, &index, hi, &mut diags) else {
            continue;
        };
        let [bias, requant, clip] = links;
        let bias_op = &graph.ops[bias];
        let Some(bias_vec) = bias_op.inputs.get(1).and_then(|b| graph.constants.get(b)).and_then(|t| t.as_i32()) else {
            diags.push(Diagnostic::warning(
                format!("ops[{}]", bias_op.id),
                "bias is not an int32 constant; chain left unfused",
            ));
            continue;
        };
        if !supported.contains(&fused) {
            diags.push(Diagnostic::warning(path, format!("{} is not supported by the target; chain left unfused", head.kind.name())));
            continue;
        }
        let OpKind::Requantize { scale } = graph.ops[requant].kind else { unreachable!() };
        let OpKind::Clip { min, max } = graph.ops[clip].kind else { unreachable!() };
        let ep = Epilogue { bias: bias_vec.to_vec(), scale, clip_min: min, clip_max: max };
        let kind = match &head.kind {
            OpKind::QnnDense => OpKind::GeneralizedDense(ep),
            OpKind::QnnConv2d(a) => OpKind::GeneralizedConv2d(*a, ep),
            _ => unreachable!(),
        };
        fusions.push(Fusion { head: hi, bias, requant, clip, kind });
    }

    let mut removed = alloc::vec![false; graph.ops.len()];
    let mut replaced: BTreeMap<usize, GraphOp> = BTreeMap::new();
    for f in fusions {
        removed[f.head] = true;
        removed[f.bias] = true;
        removed[f.requant] = true;
        let head = &graph.ops[f.head];
        replaced.insert(
            f.clip,
            GraphOp { id: graph.ops[f.clip].id.clone(), kind: f.kind, inputs: head.inputs.clone() },
        );
    }
    let ops = graph
        .ops
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed[*i])
        .map(|(i, o)| replaced.remove(&i).unwrap_or_else(|| o.clone()))
        .collect();
    (Graph { ops, ..graph.clone() }, diags)
}

type KindTest = fn(&OpKind) -> bool;

/// Returns the indices of the bias_add, requantize and clip ops following `head`.
fn follow_chain(graph: &Graph, index: &BTreeMap<&str, usize>, head: usize, diags: &mut Vec<Diagnostic>) -> Option<[usize; 3]> {
    let expected: [(&str, KindTest); 3] = [
        ("bias_add", |k| matches!(k, OpKind::BiasAdd)),
        ("requantize", |k| matches!(k, OpKind::Requantize { .. })),
        ("clip", |k| matches!(k, OpKind::Clip { .. })),
    ];
    let mut cur = head;
    let mut links = [0usize; 3];
    for (slot, (name, is_kind)) in expected.iter().enumerate() {
        let cur_op = &graph.ops[cur];
        let consumers = graph.consumers(&cur_op.id);
        let path = format!("ops[{}]", cur_op.id);
        match consumers.as_slice() {
            [] => {
                diags.push(Diagnostic::warning(path, format!("result is unused; expected a {name} epilogue, left unfused")));
                return None;
            }
            [one] if *one != "<output>" => {
                let next = index[one];
                let op = &graph.ops[next];
                if !is_kind(&op.kind) || op.inputs.first().map(String::as_str) != Some(cur_op.id.as_str()) {
                    diags.push(Diagnostic::warning(
                        path,
                        format!("consumer `{}` is {}, not {name}; chain left unfused", op.id, op.kind.name()),
                    ));
                    return None;
                }
                links[slot] = next;
                cur = next;
            }
            [_] => {
                diags.push(Diagnostic::warning(path, format!("result is a graph output; no {name} epilogue to fuse")));
                return None;
            }
            many => {
                diags.push(Diagnostic::warning(
                    path,
                    format!("result has {} consumers; ambiguous chain left unfused", many.len()),
                ));
                return None;
            }
        }
    }
    Some(links)
}
