use alloc::vec::Vec;

use super::graph::{eval_op, Graph};
use super::TensorValue;

/// Evaluates transpose/flatten/im2col nodes whose inputs are all constants
/// and replaces them by constants of the same name. Runs to a fixed point,
/// so chains of constant preprocessing collapse entirely. Preprocessing of
/// runtime values is kept; it executes on the host.
///
/// A node that fails to evaluate is kept as is; execution reports the error.
pub fn constant_fold_preprocessing(graph: &Graph) -> Graph {
    let mut out = graph.clone();
    let mut kept = Vec::with_capacity(out.ops.len());
    for op in core::mem::take(&mut out.ops) {
        let foldable = op.kind.is_preprocessing() && op.inputs.iter().all(|i| out.constants.contains_key(i));
        if foldable {
            let args: Vec<&TensorValue> = op.inputs.iter().map(|i| &out.constants[i]).collect();
            if let Ok(v) = eval_op(&op, &args) {
                out.constants.insert(op.id.clone(), v);
                continue;
            }
        }
        kept.push(op);
    }
    out.ops = kept;
    let ops = &out.ops;
    let outputs = &out.outputs;
    out.constants.retain(|k, _| ops.iter().any(|o| o.inputs.contains(k)) || outputs.contains(k));
    out
}

/// Preprocessing nodes whose inputs are all compile-time constants.
pub fn count_preprocessing_over_constants(graph: &Graph) -> usize {
    graph
        .ops
        .iter()
        .filter(|o| o.kind.is_preprocessing() && o.inputs.iter().all(|i| graph.is_constant(i)))
        .count()
}
