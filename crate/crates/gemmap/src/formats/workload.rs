//! Workload documents: an operator graph, or a single quantized GEMM.
//!
//! ```yaml
//! gemm: {N: 64, C: 64, K: 64, dtype: int8, scale: 1/64, clip: [-128, 127]}
//! ```
//!
//! A shorthand GEMM may also give `bias` (int32 list of length K) and
//! `weight` (a tensor); missing weights are drawn from the run seed. It
//! becomes a one-operator graph with input `x` and output `gemm`.
//!
//! ```yaml
//! inputs: [{name: x, shape: [8, 24]}]
//! constants:
//!   w_kc: {dtype: int8, shape: [16, 24], data: [...]}     # or base64: "..."
//!   b: {dtype: int32, shape: [16], data: [...]}
//! ops:
//!   - {id: w, kind: transpose, inputs: [w_kc]}
//!   - {id: d, kind: qnn_dense, inputs: [x, w]}
//!   - {id: db, kind: bias_add, inputs: [d, b]}
//!   - {id: dq, kind: requantize, inputs: [db], scale: 1/64}
//!   - {id: y, kind: clip, inputs: [dq], min: -128, max: 127}
//! outputs: [y]
//! ```
//!
//! Operator attributes: `requantize` takes `scale`; `clip` takes `min`,
//! `max`; `flatten` takes `axis`; `qnn_conv2d` and `im2col` take `kernel`
//! and optionally `stride` (default `[1, 1]`) and `padding` (default
//! `[0, 0]`); the generalized operators additionally take `scale`, `min`,
//! `max` and `bias`. Base64 tensor data is little-endian.

use std::collections::BTreeMap;

use base64::Engine;
use gemmap_core::workload::{Conv2dAttrs, Epilogue, Graph, GraphInput, GraphOp, OpKind, TensorData};
use gemmap_core::{Diagnostic, TensorValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{from_yaml, Ratio};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gemm: Option<GemmDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<InputDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<BTreeMap<String, TensorDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ops: Option<Vec<OpDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GemmDoc {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "C")]
    pub c: u64,
    #[serde(rename = "K")]
    pub k: u64,
    pub dtype: String,
    pub scale: Ratio,
    pub clip: [i8; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<i32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<TensorDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDoc {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDoc {
    pub dtype: String,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpDoc {
    pub id: String,
    pub kind: String,
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Ratio>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<i32>>,
}

pub fn tensor_from_doc(d: &TensorDoc, path: &str) -> Result<TensorValue, Diagnostic> {
    let n: usize = d.shape.iter().product();
    let err = |m: String| Diagnostic::error(path, m);
    let width = match d.dtype.as_str() {
        "int8" => 1,
        "int32" => 4,
        other => return Err(err(format!("dtype `{other}` is not int8 or int32"))),
    };
    let values: Vec<i64> = match (&d.data, &d.base64) {
        (Some(v), None) => v.clone(),
        (None, Some(b)) => {
            let bytes = base64::engine::general_purpose::STANDARD.decode(b.trim()).map_err(|e| err(format!("base64: {e}")))?;
            if bytes.len() != n * width {
                return Err(err(format!("base64 holds {} bytes, shape needs {}", bytes.len(), n * width)));
            }
            match width {
                1 => bytes.iter().map(|&b| b as i8 as i64).collect(),
                _ => bytes.chunks_exact(4).map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as i64).collect(),
            }
        }
        _ => return Err(err("exactly one of `data` and `base64` is required".into())),
    };
    if values.len() != n {
        return Err(err(format!("{} values for shape {:?} ({n} elements)", values.len(), d.shape)));
    }
    let (lo, hi) = if width == 1 { (i8::MIN as i64, i8::MAX as i64) } else { (i32::MIN as i64, i32::MAX as i64) };
    if let Some(i) = values.iter().position(|v| !(lo..=hi).contains(v)) {
        return Err(err(format!("element {i} = {} is out of {} range", values[i], d.dtype)));
    }
    Ok(if width == 1 {
        TensorValue::i8(d.shape.clone(), values.iter().map(|&v| v as i8).collect())
    } else {
        TensorValue::i32(d.shape.clone(), values.iter().map(|&v| v as i32).collect())
    })
}

pub fn tensor_to_doc(t: &TensorValue) -> TensorDoc {
    let (dtype, data) = match &t.data {
        TensorData::I8(v) => ("int8", v.iter().map(|&x| x as i64).collect()),
        TensorData::I32(v) => ("int32", v.iter().map(|&x| x as i64).collect()),
    };
    TensorDoc { dtype: dtype.into(), shape: t.shape.clone(), data: Some(data), base64: None }
}

fn op_from_doc(d: &OpDoc, path: &str, errs: &mut Vec<Diagnostic>) -> Option<GraphOp> {
    let present = [
        ("scale", d.scale.is_some()),
        ("min", d.min.is_some()),
        ("max", d.max.is_some()),
        ("axis", d.axis.is_some()),
        ("kernel", d.kernel.is_some()),
        ("stride", d.stride.is_some()),
        ("padding", d.padding.is_some()),
        ("bias", d.bias.is_some()),
    ];
    let allowed: &[&str] = match d.kind.as_str() {
        "qnn_dense" | "bias_add" | "transpose" => &[],
        "requantize" => &["scale"],
        "clip" => &["min", "max"],
        "flatten" => &["axis"],
        "qnn_conv2d" | "im2col" => &["kernel", "stride", "padding"],
        "generalized_dense" => &["scale", "min", "max", "bias"],
        "generalized_conv2d" => &["kernel", "stride", "padding", "scale", "min", "max", "bias"],
        other => {
            errs.push(Diagnostic::error(format!("{path}.kind"), format!("unknown operator kind `{other}`")));
            return None;
        }
    };
    let before = errs.len();
    for (name, _) in present.iter().filter(|(n, p)| *p && !allowed.contains(n)) {
        errs.push(Diagnostic::error(format!("{path}.{name}"), format!("not an attribute of {}", d.kind)));
    }
    let required = |name: &str, errs: &mut Vec<Diagnostic>| {
        errs.push(Diagnostic::error(format!("{path}.{name}"), format!("required for {}", d.kind)));
    };
    let conv = || -> Option<Conv2dAttrs> {
        let k = d.kernel?;
        let s = d.stride.unwrap_or([1, 1]);
        let p = d.padding.unwrap_or([0, 0]);
        Some(Conv2dAttrs { kernel: (k[0], k[1]), stride: (s[0], s[1]), padding: (p[0], p[1]) })
    };
    let epilogue = |errs: &mut Vec<Diagnostic>| -> Option<Epilogue> {
        let mut ok = true;
        for (name, p) in [("scale", d.scale.is_some()), ("min", d.min.is_some()), ("max", d.max.is_some()), ("bias", d.bias.is_some())] {
            if !p {
                required(name, errs);
                ok = false;
            }
        }
        ok.then(|| Epilogue { bias: d.bias.clone().unwrap(), scale: d.scale.unwrap().0, clip_min: d.min.unwrap(), clip_max: d.max.unwrap() })
    };
    let kind = match d.kind.as_str() {
        "qnn_dense" => Some(OpKind::QnnDense),
        "bias_add" => Some(OpKind::BiasAdd),
        "transpose" => Some(OpKind::Transpose),
        "requantize" => d.scale.map(|s| OpKind::Requantize { scale: s.0 }).or_else(|| {
            required("scale", errs);
            None
        }),
        "clip" => match (d.min, d.max) {
            (Some(min), Some(max)) => Some(OpKind::Clip { min, max }),
            _ => {
                required("min/max", errs);
                None
            }
        },
        "flatten" => d.axis.map(|axis| OpKind::Flatten { axis }).or_else(|| {
            required("axis", errs);
            None
        }),
        "qnn_conv2d" | "im2col" | "generalized_conv2d" => match conv() {
            None => {
                required("kernel", errs);
                None
            }
            Some(c) => match d.kind.as_str() {
                "qnn_conv2d" => Some(OpKind::QnnConv2d(c)),
                "im2col" => Some(OpKind::Im2col(c)),
                _ => epilogue(errs).map(|e| OpKind::GeneralizedConv2d(c, e)),
            },
        },
        "generalized_dense" => epilogue(errs).map(OpKind::GeneralizedDense),
        _ => unreachable!(),
    };
    if errs.len() > before {
        return None;
    }
    kind.map(|kind| GraphOp { id: d.id.clone(), kind, inputs: d.inputs.clone() })
}

/// Builds the operator graph. `seed` fills in shorthand GEMM weights when
/// the document does not give them.
pub fn graph_from_doc(doc: &WorkloadDoc, seed: u64) -> Result<Graph, Vec<Diagnostic>> {
    if let Some(g) = &doc.gemm {
        let mut errs = Vec::new();
        for (name, p) in [("inputs", doc.inputs.is_some()), ("constants", doc.constants.is_some()), ("ops", doc.ops.is_some()), ("outputs", doc.outputs.is_some())] {
            if p {
                errs.push(Diagnostic::error(name, "not allowed together with `gemm`"));
            }
        }
        return match gemm_graph(g, seed) {
            Ok(graph) if errs.is_empty() => Ok(graph),
            Ok(_) => Err(errs),
            Err(e) => {
                errs.extend(e);
                Err(errs)
            }
        };
    }
    let mut errs = Vec::new();
    let mut req = |name: &str, p: bool| {
        if !p {
            errs.push(Diagnostic::error(name, "required (or use the `gemm` shorthand)"));
        }
    };
    req("inputs", doc.inputs.is_some());
    req("ops", doc.ops.is_some());
    req("outputs", doc.outputs.is_some());
    if !errs.is_empty() {
        return Err(errs);
    }
    let mut g = Graph {
        inputs: doc.inputs.iter().flatten().map(|i| GraphInput { name: i.name.clone(), shape: i.shape.clone() }).collect(),
        outputs: doc.outputs.clone().unwrap_or_default(),
        ..Default::default()
    };
    for (name, t) in doc.constants.iter().flatten() {
        match tensor_from_doc(t, &format!("constants.{name}")) {
            Ok(v) => {
                g.constants.insert(name.clone(), v);
            }
            Err(e) => errs.push(e),
        }
    }
    for (i, o) in doc.ops.iter().flatten().enumerate() {
        if let Some(op) = op_from_doc(o, &format!("ops[{i}]"), &mut errs) {
            g.ops.push(op);
        }
    }
    if errs.is_empty() {
        if let Err(e) = g.validate() {
            errs.push(Diagnostic::error("ops", e.to_string()));
        }
    }
    if errs.is_empty() {
        Ok(g)
    } else {
        Err(errs)
    }
}

fn gemm_graph(g: &GemmDoc, seed: u64) -> Result<Graph, Vec<Diagnostic>> {
    let mut errs = Vec::new();
    if g.dtype != "int8" {
        errs.push(Diagnostic::error("gemm.dtype", "only int8 is supported"));
    }
    if g.n == 0 || g.c == 0 || g.k == 0 {
        errs.push(Diagnostic::error("gemm", "N, C and K must be positive"));
    }
    if g.clip[0] > g.clip[1] {
        errs.push(Diagnostic::error("gemm.clip", "min exceeds max"));
    }
    let (n, c, k) = (g.n as usize, g.c as usize, g.k as usize);
    let bias = g.bias.clone().unwrap_or_else(|| vec![0; k]);
    if bias.len() != k {
        errs.push(Diagnostic::error("gemm.bias", format!("{} values, K is {k}", bias.len())));
    }
    let weight = match &g.weight {
        Some(t) => match tensor_from_doc(t, "gemm.weight") {
            Ok(w) if w.shape == [c, k] && w.as_i8().is_some() => Some(w),
            Ok(_) => {
                errs.push(Diagnostic::error("gemm.weight", format!("must be int8 of shape [{c}, {k}]")));
                None
            }
            Err(e) => {
                errs.push(e);
                None
            }
        },
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5745_4947_4854);
            Some(TensorValue::i8(vec![c, k], (0..c * k).map(|_| rng.gen()).collect()))
        }
    };
    if !errs.is_empty() {
        return Err(errs);
    }
    let ep = Epilogue { bias, scale: g.scale.0, clip_min: g.clip[0], clip_max: g.clip[1] };
    Ok(Graph {
        inputs: vec![GraphInput { name: "x".into(), shape: vec![n, c] }],
        constants: BTreeMap::from([("w".to_string(), weight.unwrap())]),
        ops: vec![GraphOp { id: "gemm".into(), kind: OpKind::GeneralizedDense(ep), inputs: vec!["x".into(), "w".into()] }],
        outputs: vec!["gemm".into()],
    })
}

pub fn parse_workload(text: &str, seed: u64) -> Result<Graph, Vec<Diagnostic>> {
    let doc: WorkloadDoc = from_yaml(text).map_err(|d| vec![d])?;
    graph_from_doc(&doc, seed)
}

/// Random int8 values for every graph input.
pub fn random_inputs(g: &Graph, seed: u64) -> BTreeMap<String, TensorValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    g.inputs
        .iter()
        .map(|i| (i.name.clone(), TensorValue::i8(i.shape.clone(), (0..i.shape.iter().product()).map(|_| rng.gen()).collect())))
        .collect()
}

/// An input file maps graph input names to tensors.
pub fn parse_inputs(text: &str) -> Result<BTreeMap<String, TensorValue>, Vec<Diagnostic>> {
    let docs: BTreeMap<String, TensorDoc> = from_yaml(text).map_err(|d| vec![d])?;
    let mut out = BTreeMap::new();
    let mut errs = Vec::new();
    for (name, d) in &docs {
        match tensor_from_doc(d, name) {
            Ok(t) => {
                out.insert(name.clone(), t);
            }
            Err(e) => errs.push(e),
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(errs)
    }
}
