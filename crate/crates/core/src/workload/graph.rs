use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{lower_conv_to_gemm, Conv2dAttrs, Im2colDescriptor};
use super::{reference_execute, requantize_i8, DType, Epilogue, GemmShape, GemmWorkload, TensorValue, WorkloadError};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpKind {
    /// `[N,C] int8 × [C,K] int8 → [N,K] int32`.
    QnnDense,
    /// NHWC int8 × RSCK int8 → NHWK int32.
    QnnConv2d(Conv2dAttrs),
    /// Adds an int32 vector along the last axis.
    BiasAdd,
    Requantize { scale: Rational },
    Clip { min: i8, max: i8 },
    /// 2-D transpose.
    Transpose,
    /// Collapse to 2-D: `[Π shape[..axis], Π shape[axis..]]`.
    Flatten { axis: usize },
    Im2col(Conv2dAttrs),
    GeneralizedDense(Epilogue),
    GeneralizedConv2d(Conv2dAttrs, Epilogue),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::QnnDense => "qnn_dense",
            OpKind::QnnConv2d(_) => "qnn_conv2d",
            OpKind::BiasAdd => "bias_add",
            OpKind::Requantize { .. } => "requantize",
            OpKind::Clip { .. } => "clip",
            OpKind::Transpose => "transpose",
            OpKind::Flatten { .. } => "flatten",
            OpKind::Im2col(_) => "im2col",
            OpKind::GeneralizedDense(_) => "generalized_dense",
            OpKind::GeneralizedConv2d(..) => "generalized_conv2d",
        }
    }

    pub fn is_preprocessing(&self) -> bool {
        matches!(self, OpKind::Transpose | OpKind::Flatten { .. } | OpKind::Im2col(_))
    }

    pub fn is_accelerated(&self) -> bool {
        matches!(self, OpKind::GeneralizedDense(_) | OpKind::GeneralizedConv2d(..))
    }
}

/// One node. Its result is the value named `id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphOp {
    pub id: String,
    pub kind: OpKind,
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphInput {
    pub name: String,
    pub shape: Vec<usize>,
}

/// A DAG of operators kept in topological order. Graph inputs, constants
/// and operator results share one namespace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    pub inputs: Vec<GraphInput>,
    pub constants: BTreeMap<String, TensorValue>,
    pub ops: Vec<GraphOp>,
    pub outputs: Vec<String>,
}

impl Graph {
    pub fn op(&self, id: &str) -> Option<&GraphOp> {
        self.ops.iter().find(|o| o.id == id)
    }

    pub fn is_constant(&self, name: &str) -> bool {
        self.constants.contains_key(name)
    }

    /// Ids of operators reading `name`, plus one entry per graph output naming it.
    pub fn consumers(&self, name: &str) -> Vec<&str> {
        let mut c: Vec<&str> = self
            .ops
            .iter()
            .filter(|o| o.inputs.iter().any(|i| i == name))
            .map(|o| o.id.as_str())
            .collect();
        c.extend(self.outputs.iter().filter(|o| *o == name).map(|_| "<output>"));
        c
    }

    /// Checks unique names and that every operand is defined before use.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let mut defined: BTreeSet<&str> = BTreeSet::new();
        for name in self.inputs.iter().map(|i| i.name.as_str()).chain(self.constants.keys().map(String::as_str)) {
            if !defined.insert(name) {
                return Err(WorkloadError::DuplicateName(name.to_string()));
            }
        }
        for op in &self.ops {
            for i in &op.inputs {
                if !defined.contains(i.as_str()) {
                    return Err(WorkloadError::NotTopological(op.id.clone()));
                }
            }
            if !defined.insert(op.id.as_str()) {
                return Err(WorkloadError::DuplicateName(op.id.clone()));
            }
        }
        for o in &self.outputs {
            if !defined.contains(o.as_str()) {
                return Err(WorkloadError::UnknownValue(o.clone()));
            }
        }
        Ok(())
    }
}

fn op_err(op: &GraphOp, msg: impl Into<String>) -> WorkloadError {
    WorkloadError::Op(op.id.clone(), msg.into())
}

fn expect_i8<'a>(op: &GraphOp, t: &'a TensorValue) -> Result<&'a [i8], WorkloadError> {
    t.as_i8().ok_or_else(|| WorkloadError::DType(op.id.clone(), DType::Int8.name()))
}

fn expect_i32<'a>(op: &GraphOp, t: &'a TensorValue) -> Result<&'a [i32], WorkloadError> {
    t.as_i32().ok_or_else(|| WorkloadError::DType(op.id.clone(), DType::Int32.name()))
}

fn arity(op: &GraphOp, args: &[&TensorValue], n: usize) -> Result<(), WorkloadError> {
    if args.len() != n {
        return Err(op_err(op, format!("expects {n} inputs, got {}", args.len())));
    }
    Ok(())
}

fn dense_i32(op: &GraphOp, x: &TensorValue, w: &TensorValue) -> Result<TensorValue, WorkloadError> {
    let (&[n, c], &[c2, k]) = (x.shape.as_slice(), w.shape.as_slice()) else {
        return Err(op_err(op, "dense operands must be 2-D"));
    };
    if c != c2 {
        return Err(WorkloadError::ShapeMismatch { expected: vec![c, k], got: w.shape.clone() });
    }
    let (xd, wd) = (expect_i8(op, x)?, expect_i8(op, w)?);
    let mut out = vec![0i32; n * k];
    for row in 0..n {
        for r in 0..c {
            let a = xd[row * c + r] as i32;
            for col in 0..k {
                out[row * k + col] = out[row * k + col].wrapping_add(a * wd[r * k + col] as i32);
            }
        }
    }
    Ok(TensorValue::i32(vec![n, k], out))
}

fn conv_i32(op: &GraphOp, attrs: Conv2dAttrs, x: &TensorValue, w: &TensorValue) -> Result<TensorValue, WorkloadError> {
    let d = Im2colDescriptor::new(&x.shape, attrs)?;
    let (xd, wd) = (expect_i8(op, x)?, expect_i8(op, w)?);
    if w.shape.len() != 4 || w.shape[..3] != [attrs.kernel.0, attrs.kernel.1, d.in_c] {
        return Err(op_err(op, format!("weight shape {:?} does not match kernel and channels", w.shape)));
    }
    let kout = w.shape[3];
    let (r, s) = attrs.kernel;
    let mut out = vec![0i32; d.batch * d.out_h * d.out_w * kout];
    for b in 0..d.batch {
        for p in 0..d.out_h {
            for q in 0..d.out_w {
                let o = ((b * d.out_h + p) * d.out_w + q) * kout;
                for dy in 0..r {
                    for dx in 0..s {
                        let y = (p * attrs.stride.0 + dy) as isize - attrs.padding.0 as isize;
                        let xx = (q * attrs.stride.1 + dx) as isize - attrs.padding.1 as isize;
                        if y < 0 || xx < 0 || y as usize >= d.in_h || xx as usize >= d.in_w {
                            continue;
                        }
                        let src = ((b * d.in_h + y as usize) * d.in_w + xx as usize) * d.in_c;
                        let wrow = (dy * s + dx) * d.in_c;
                        for ci in 0..d.in_c {
                            let a = xd[src + ci] as i32;
                            for ko in 0..kout {
                                out[o + ko] = out[o + ko].wrapping_add(a * wd[(wrow + ci) * kout + ko] as i32);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(TensorValue::i32(d.output_shape(kout), out))
}

/// Evaluates one operator on concrete tensors.
pub(crate) fn eval_op(op: &GraphOp, args: &[&TensorValue]) -> Result<TensorValue, WorkloadError> {
    match &op.kind {
        OpKind::QnnDense => {
            arity(op, args, 2)?;
            dense_i32(op, args[0], args[1])
        }
        OpKind::QnnConv2d(attrs) => {
            arity(op, args, 2)?;
            conv_i32(op, *attrs, args[0], args[1])
        }
        OpKind::BiasAdd => {
            arity(op, args, 2)?;
            let (x, b) = (expect_i32(op, args[0])?, expect_i32(op, args[1])?);
            let k = *args[0].shape.last().unwrap_or(&0);
            if args[1].shape != [k] {
                return Err(WorkloadError::ShapeMismatch { expected: vec![k], got: args[1].shape.clone() });
            }
            let out = x.iter().enumerate().map(|(i, v)| v.wrapping_add(b[i % k])).collect();
            Ok(TensorValue::i32(args[0].shape.clone(), out))
        }
        OpKind::Requantize { scale } => {
            arity(op, args, 1)?;
            let x = expect_i32(op, args[0])?;
            Ok(TensorValue::i8(args[0].shape.clone(), x.iter().map(|&v| requantize_i8(v, *scale)).collect()))
        }
        OpKind::Clip { min, max } => {
            arity(op, args, 1)?;
            let x = expect_i8(op, args[0])?;
            Ok(TensorValue::i8(args[0].shape.clone(), x.iter().map(|&v| v.clamp(*min, *max)).collect()))
        }
        OpKind::Transpose => {
            arity(op, args, 1)?;
            transpose(op, args[0])
        }
        OpKind::Flatten { axis } => {
            arity(op, args, 1)?;
            let s = &args[0].shape;
            if *axis > s.len() {
                return Err(op_err(op, format!("axis {axis} out of range for rank {}", s.len())));
            }
            let rows = s[..*axis].iter().product();
            let cols = s[*axis..].iter().product();
            Ok(args[0].reshaped(vec![rows, cols]))
        }
        OpKind::Im2col(attrs) => {
            arity(op, args, 1)?;
            Im2colDescriptor::new(&args[0].shape, *attrs)?.apply(args[0])
        }
        OpKind::GeneralizedDense(ep) => {
            arity(op, args, 2)?;
            let (&[n, c], &[c2, k]) = (args[0].shape.as_slice(), args[1].shape.as_slice()) else {
                return Err(op_err(op, "dense operands must be 2-D"));
            };
            if c != c2 {
                return Err(WorkloadError::ShapeMismatch { expected: vec![c, k], got: args[1].shape.clone() });
            }
            let g = GemmWorkload::new(GemmShape::new(n as u64, c as u64, k as u64), expect_i8(op, args[1])?.to_vec(), ep.clone())?;
            reference_execute(&g, args[0])
        }
        OpKind::GeneralizedConv2d(attrs, ep) => {
            arity(op, args, 2)?;
            let (g, d) = lower_conv_to_gemm(*attrs, &args[0].shape, args[1], ep.clone())?;
            let cols = d.apply(args[0])?;
            let out = reference_execute(&g, &cols)?;
            Ok(out.reshaped(d.output_shape(g.shape.k as usize)))
        }
    }
}

fn transpose(op: &GraphOp, t: &TensorValue) -> Result<TensorValue, WorkloadError> {
    let &[r, c] = t.shape.as_slice() else {
        return Err(op_err(op, "transpose expects a 2-D tensor"));
    };
    fn tr<T: Copy + Default>(v: &[T], r: usize, c: usize) -> Vec<T> {
        let mut o = vec![T::default(); r * c];
        for i in 0..r {
            for j in 0..c {
                o[j * r + i] = v[i * c + j];
            }
        }
        o
    }
    let data = match &t.data {
        super::TensorData::I8(v) => super::TensorData::I8(tr(v, r, c)),
        super::TensorData::I32(v) => super::TensorData::I32(tr(v, r, c)),
    };
    Ok(TensorValue { shape: vec![c, r], data, quant: t.quant })
}

/// Runs the whole graph on the host and returns the named outputs.
pub fn execute_graph(graph: &Graph, inputs: &BTreeMap<String, TensorValue>) -> Result<BTreeMap<String, TensorValue>, WorkloadError> {
    graph.validate()?;
    let mut env: BTreeMap<&str, TensorValue> = BTreeMap::new();
    for gi in &graph.inputs {
        let t = inputs.get(&gi.name).ok_or_else(|| WorkloadError::UnknownValue(gi.name.clone()))?;
        if t.shape != gi.shape {
            return Err(WorkloadError::ShapeMismatch { expected: gi.shape.clone(), got: t.shape.clone() });
        }
        env.insert(gi.name.as_str(), t.clone());
    }
    for op in &graph.ops {
        let args: Vec<&TensorValue> = op
            .inputs
            .iter()
            .map(|n| env.get(n.as_str()).or_else(|| graph.constants.get(n)).ok_or_else(|| WorkloadError::UnknownValue(n.clone())))
            .collect::<Result<_, _>>()?;
        let v = eval_op(op, &args)?;
        env.insert(op.id.as_str(), v);
    }
    graph
        .outputs
        .iter()
        .map(|o| {
            let v = env.get(o.as_str()).or_else(|| graph.constants.get(o)).ok_or_else(|| WorkloadError::UnknownValue(o.clone()))?;
            Ok((o.clone(), v.clone()))
        })
        .collect()
}
