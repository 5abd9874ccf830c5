//! Whole-graph compilation and execution.
//!
//! The graph is legalized into generalized operators, optionally has its
//! constant preprocessing folded, and every generalized operator is given
//! the best-ranked mapping from the schedule space. Execution runs those
//! operators through the lowered-program interpreter and everything else on
//! the host, recording a `HOST op=<kind> id=<id>` trace line for each host
//! operator and a `LAYER id=<id> op=<kind>` header before each accelerated
//! operator's intrinsic trace.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::arch::ArchSpec;
use crate::costmodel::rank_candidates;
use crate::diag::Diagnostic;
use crate::lowering::{interpret_traced, lower_mapping, tensorize, LowerError};
use crate::mapspace::Mapping;
use crate::spacegen::generate_space;
use crate::workload::{
    constant_fold_preprocessing, eval_op, legalize_fuse, lower_conv_to_gemm, FusedKind, GemmShape, GemmWorkload, Graph, GraphOp, OpKind,
    TensorValue, WorkloadError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineOptions {
    pub fold_constants: bool,
    pub granularity: u64,
    pub k: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { fold_constants: true, granularity: crate::spacegen::DEFAULT_GRANULARITY, k: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Host(GraphOp),
    Accelerated { op: GraphOp, shape: GemmShape, mapping: Mapping },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledGraph {
    /// The graph after legalization and (optionally) folding.
    pub graph: Graph,
    pub steps: Vec<Step>,
    pub diagnostics: Vec<Diagnostic>,
}

impl CompiledGraph {
    /// Preprocessing operators left to run on the host.
    pub fn host_preprocessing(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, Step::Host(op) if op.kind.is_preprocessing())).count()
    }

    /// Replaces the mapping of accelerated operator `id`; false if there is none.
    pub fn set_mapping(&mut self, id: &str, m: Mapping) -> bool {
        for s in &mut self.steps {
            if let Step::Accelerated { op, mapping, .. } = s {
                if op.id == id {
                    *mapping = m;
                    return true;
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error("operator `{0}`: no feasible mapping for GEMM {1}")]
    NoMapping(String, GemmShape),
    #[error("operator `{0}`: {1}")]
    Operand(String, String),
}

/// GEMM shape of a generalized operator given its operand shapes.
fn gemm_shape(op: &GraphOp, shapes: &BTreeMap<String, Vec<usize>>) -> Result<GemmShape, PipelineError> {
    let get = |i: usize| {
        op.inputs
            .get(i)
            .and_then(|n| shapes.get(n))
            .ok_or_else(|| PipelineError::Operand(op.id.clone(), format!("operand {i} has unknown shape")))
    };
    let (x, w) = (get(0)?, get(1)?);
    match &op.kind {
        OpKind::GeneralizedDense(_) => match (x.as_slice(), w.as_slice()) {
            (&[n, c], &[c2, k]) if c == c2 => Ok(GemmShape::new(n as u64, c as u64, k as u64)),
            _ => Err(PipelineError::Operand(op.id.clone(), format!("dense shapes {x:?} × {w:?}"))),
        },
        OpKind::GeneralizedConv2d(attrs, ep) => {
            let wt = TensorValue::i8(w.clone(), alloc::vec![0; w.iter().product()]);
            let (g, _) = lower_conv_to_gemm(*attrs, x, &wt, ep.clone())?;
            Ok(g.shape)
        }
        _ => unreachable!("only generalized operators are accelerated"),
    }
}

/// Shapes of every value, found by running shape-only evaluation on zeros.
fn infer_shapes(graph: &Graph) -> Result<BTreeMap<String, Vec<usize>>, PipelineError> {
    let mut env: BTreeMap<String, TensorValue> = graph.constants.clone();
    for gi in &graph.inputs {
        env.insert(gi.name.clone(), TensorValue::i8(gi.shape.clone(), alloc::vec![0; gi.shape.iter().product()]));
    }
    for op in &graph.ops {
        let args: Vec<&TensorValue> = op.inputs.iter().map(|i| &env[i]).collect();
        let v = eval_op(op, &args)?;
        env.insert(op.id.clone(), v);
    }
    Ok(env.into_iter().map(|(k, v)| (k, v.shape)).collect())
}

/// An accelerated operator and the GEMM it computes.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub op: GraphOp,
    pub shape: GemmShape,
}

/// Validates, legalizes and (optionally) folds `graph`, returning the
/// rewritten graph, legalization diagnostics and its accelerated layers.
pub fn prepare(graph: &Graph, fold_constants: bool) -> Result<(Graph, Vec<Diagnostic>, Vec<Layer>), PipelineError> {
    graph.validate()?;
    let (fused, diagnostics) = legalize_fuse(graph, &FusedKind::ALL);
    let g = if fold_constants { constant_fold_preprocessing(&fused) } else { fused };
    let shapes = infer_shapes(&g)?;
    let layers = g
        .ops
        .iter()
        .filter(|op| op.kind.is_accelerated())
        .map(|op| Ok(Layer { op: op.clone(), shape: gemm_shape(op, &shapes)? }))
        .collect::<Result<_, PipelineError>>()?;
    Ok((g, diagnostics, layers))
}

/// The best-ranked mapping of the whole schedule space for one GEMM.
pub fn best_mapping(shape: GemmShape, arch: &ArchSpec, opts: PipelineOptions) -> Option<Mapping> {
    let mut space = generate_space(shape, arch, opts.granularity, opts.k).candidates;
    rank_candidates(&mut space, shape, arch);
    space.into_iter().next().map(|c| c.mapping)
}

pub fn compile_graph(graph: &Graph, arch: &ArchSpec, opts: PipelineOptions) -> Result<CompiledGraph, PipelineError> {
    compile_graph_with(graph, arch, opts, |_| None)
}

/// Like [`compile_graph`], but layers for which `fixed` returns a mapping use
/// it instead of searching the schedule space.
pub fn compile_graph_with(
    graph: &Graph,
    arch: &ArchSpec,
    opts: PipelineOptions,
    mut fixed: impl FnMut(&Layer) -> Option<Mapping>,
) -> Result<CompiledGraph, PipelineError> {
    let (g, diagnostics, layers) = prepare(graph, opts.fold_constants)?;
    let mut cache: BTreeMap<(u64, u64, u64), Mapping> = BTreeMap::new();
    let mut layers = layers.into_iter();
    let mut steps = Vec::new();
    for op in &g.ops {
        if !op.kind.is_accelerated() {
            steps.push(Step::Host(op.clone()));
            continue;
        }
        let layer = layers.next().expect("one layer per accelerated operator");
        if let Some(m) = fixed(&layer) {
            steps.push(Step::Accelerated { op: layer.op, shape: layer.shape, mapping: m });
            continue;
        }
        let Layer { op, shape } = layer;
        let key = (shape.n, shape.c, shape.k);
        let mapping = match cache.get(&key) {
            Some(m) => m.clone(),
            None => {
                let m = best_mapping(shape, arch, opts).ok_or_else(|| PipelineError::NoMapping(op.id.clone(), shape))?;
                cache.insert(key, m.clone());
                m
            }
        };
        steps.push(Step::Accelerated { op, shape, mapping });
    }
    Ok(CompiledGraph { graph: g, steps, diagnostics })
}

/// Executes a compiled graph; returns the graph outputs and the full trace.
pub fn run_compiled(
    cg: &CompiledGraph,
    arch: &ArchSpec,
    inputs: &BTreeMap<String, TensorValue>,
) -> Result<(BTreeMap<String, TensorValue>, String), PipelineError> {
    let mut env: BTreeMap<String, TensorValue> = cg.graph.constants.clone();
    for gi in &cg.graph.inputs {
        let t = inputs.get(&gi.name).ok_or_else(|| WorkloadError::UnknownValue(gi.name.clone()))?;
        if t.shape != gi.shape {
            return Err(WorkloadError::ShapeMismatch { expected: gi.shape.clone(), got: t.shape.clone() }.into());
        }
        env.insert(gi.name.clone(), t.clone());
    }
    let mut trace = String::new();
    for step in &cg.steps {
        match step {
            Step::Host(op) => {
                let args: Vec<&TensorValue> = op.inputs.iter().map(|i| &env[i]).collect();
                let v = eval_op(op, &args)?;
                trace.push_str(&format!("HOST op={} id={}\n", op.kind.name(), op.id));
                env.insert(op.id.clone(), v);
            }
            Step::Accelerated { op, shape, mapping } => {
                let (x, w) = (&env[&op.inputs[0]], &env[&op.inputs[1]]);
                let weight = w.as_i8().ok_or_else(|| WorkloadError::DType(op.id.clone(), "int8"))?.to_vec();
                let (workload, cols, out_shape) = match &op.kind {
                    OpKind::GeneralizedDense(ep) => {
                        (GemmWorkload::new(*shape, weight, ep.clone())?, x.clone(), alloc::vec![shape.n as usize, shape.k as usize])
                    }
                    OpKind::GeneralizedConv2d(attrs, ep) => {
                        let (g, d) = lower_conv_to_gemm(*attrs, &x.shape, w, ep.clone())?;
                        // the activation gather is part of the input move, as with an in-path im2col unit
                        (g, d.apply(x)?, d.output_shape(shape.k as usize))
                    }
                    _ => unreachable!(),
                };
                let program = tensorize(&lower_mapping(mapping, &workload, arch)?, arch)?;
                let (out, t) = interpret_traced(&program, &cols)?;
                trace.push_str(&format!("LAYER id={} op={}\n", op.id, op.kind.name()));
                trace.push_str(&t);
                env.insert(op.id.clone(), out.reshaped(out_shape));
            }
        }
    }
    let outputs = cg
        .graph
        .outputs
        .iter()
        .map(|o| env.get(o).cloned().map(|v| (o.clone(), v)).ok_or_else(|| WorkloadError::UnknownValue(o.clone())))
        .collect::<Result<_, _>>()?;
    Ok((outputs, trace))
}
